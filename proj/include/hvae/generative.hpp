#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hvae/corpus.hpp"
#include "hvae/rng.hpp"
#include "hvae/tree.hpp"

namespace hvae {

using NodeParamMap = std::map<NodeId, Eigen::VectorXd>;

/// Root-only tree grown into a full tree with the given branching per level.
/// Node means are set to alpha_star and stdevs to sigma_n.
TruncatedTree build_tree_shape(const std::vector<int>& branching, const Hyperparams& hyper);

/// Top-down draw alpha_p ~ N(alpha_par(p), sigma_n^2 I), with alpha* as the
/// root's parent.
NodeParamMap sample_node_params(const TruncatedTree& shape, std::uint64_t seed);

/// v_e ~ Beta(1, gamma*) for every edge; the rightmost child of each parent
/// gets weight 1 so the truncated path masses sum to one.
EdgeWeights draw_edge_weights(const TruncatedTree& shape, double gamma_star, Rng& rng);

/// n draws of a leaf from Mult(pi(V)).
std::vector<NodeId> sample_paths(const TruncatedTree& shape, const EdgeWeights& v, int n, Rng& rng);

struct SequenceSample {
  EdgeWeights v;
  std::vector<NodeId> paths;
  Eigen::MatrixXd z;  // D x n
};

/// Ancestral draw of one sequence: V_m, then c_mn, then z_mn ~ N(alpha_c, sigma_d^2 I).
/// The shape is taken from `shape`; leaf parameters from `params`.
SequenceSample sample_sequence(const TruncatedTree& shape, const NodeParamMap& params,
                               double gamma_star, int n_elems, double sigma_d,
                               std::uint64_t seed);

enum class Lift { random_orthonormal, identity };

struct SynthConfig {
  std::vector<int> branching{3, 2};
  int elems_per_seq = 20;
  int n_seqs = 200;
  int feature_dim = 64;
  double noise = 0.3;  // feature-space Gaussian noise stdev
  std::uint64_t seed = 1;
  int latent_dim = 8;
  double sigma_d = 0.3;      // latent emission stdev around the leaf parameter
  double gamma_star = 1.0;
  double separation = 10.0;  // offset of top-level children from the root
  double level_shrink = 0.4; // offset scale ratio between consecutive levels
  Lift lift = Lift::random_orthonormal;
};

struct GroundTruth {
  TruncatedTree tree;  // mu holds the generating alpha_p
  std::vector<std::vector<NodeId>> path_of;
  std::vector<Eigen::MatrixXd> latents;
  Eigen::MatrixXd lift;  // F x latent_dim
};

/// Fixed tree with well-separated parameters, sequences drawn by
/// sample_sequence, latents lifted to feature space by a fixed linear map plus
/// noise. Element labels are the depth-first index of the generating leaf.
std::pair<Corpus, GroundTruth> synth_corpus(const SynthConfig& cfg);

/// Smallest distance between two generating leaf parameters divided by the
/// per-coordinate within-cluster stdev sqrt(sigma_d^2 + noise^2).
double separation_ratio(const GroundTruth& truth, const SynthConfig& cfg);

}  // namespace hvae
