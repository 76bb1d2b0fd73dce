#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hvae/tree.hpp"
#include "hvae/variational.hpp"

namespace hvae {

struct AdaptConfig {
  bool enabled = true;
  double radius_threshold = 1.5;     // split a leaf whose weighted radius exceeds this
  int split_arity = 2;               // children created per split
  double fraction_threshold = 0.01;  // prune a leaf holding less of the data than this
  int max_leaves = 32;               // grow never exceeds this many paths
};

struct AdaptEvent {
  int round = 0;
  std::string action;  // split | prune | collapse
  NodeId node;
  double metric = 0.0;
  double threshold = 0.0;

  nlohmann::json to_json() const;
};

struct AdaptReport {
  std::vector<AdaptEvent> events;
  std::vector<std::string> warnings;

  void append(const AdaptReport& other);
};

/// sqrt( sum phi ||z - mu_p||^2 / sum phi ) over all elements; 0 when the
/// leaf holds no assignment mass.
double weighted_radius(const TruncatedTree& tree, const NodeId& leaf,
                       std::span<const SequenceVarState> states, const LatentTable& latents);

/// Share of all elements assigned to `leaf`: sum phi / sum_m N_m.
double data_fraction(const TruncatedTree& tree, const NodeId& leaf,
                     std::span<const SequenceVarState> states);

/// Splits every leaf whose weighted radius exceeds the threshold into
/// `split_arity` children (means perturbed around the parent, stdev sigma_n),
/// spreading the leaf's phi mass evenly over them. Stops before exceeding
/// max_leaves. Stick Betas of new edges start at the prior.
AdaptReport grow(TruncatedTree& tree, std::vector<SequenceVarState>& states,
                 const LatentTable& latents, const AdaptConfig& cfg, std::uint64_t seed,
                 int round = 0);

/// Removes leaves below the fraction threshold (always keeping the heaviest
/// one), drops internal nodes left without children, replaces single-child
/// internal nodes by their child and relabels. Phi is renormalized over the
/// surviving paths.
AdaptReport prune(TruncatedTree& tree, std::vector<SequenceVarState>& states,
                  const AdaptConfig& cfg, int round = 0);

/// One adaptation round: prune, then grow. Pruning first keeps freshly
/// split children, which start with a 1/K share of their parent's mass,
/// from being removed in the same round.
AdaptReport adapt(TruncatedTree& tree, std::vector<SequenceVarState>& states,
                  const LatentTable& latents, const AdaptConfig& cfg, std::uint64_t seed,
                  int round);

}  // namespace hvae
