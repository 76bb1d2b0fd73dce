#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hvae/exec.hpp"
#include "hvae/tree.hpp"

namespace hvae {

/// Parameters of q(v_me) = Beta(gamma0, gamma1).
struct BetaParams {
  double gamma0 = 1.0;
  double gamma1 = 1.0;

  bool operator==(const BetaParams&) const = default;
};

/// Per-sequence variational factors. `beta` is indexed by the layout's edge
/// order; absorbing (rightmost) edges carry no stick factor and stay at the
/// prior (1, gamma*). `phi` is P x N_m, one column per element.
struct SequenceVarState {
  std::vector<BetaParams> beta;
  Eigen::MatrixXd phi;

  static SequenceVarState uniform(const TreeLayout& layout, int n_elems, double gamma_star);
  bool operator==(const SequenceVarState& other) const;
};

/// Per-element latent Gaussians from the encoder and the codes VI treats as
/// observations (D x N_m per sequence).
struct LatentTable {
  std::vector<Eigen::MatrixXd> z;
  std::vector<Eigen::MatrixXd> z_mean;
  std::vector<Eigen::MatrixXd> z_stdev;

  /// Observation table whose codes are the given means (stdev set to 1).
  static LatentTable from_codes(std::vector<Eigen::MatrixXd> codes);
};

struct NodeGaussian {
  Eigen::VectorXd mu;
  double sigma = 1.0;
};

/// Conjugate update of a leaf's q(alpha_p):
///   1/sigma^2 = 1/sigma_n^2 + sum phi / sigma_d^2
///   mu = sigma^2 (mu_par / sigma_n^2 + sum phi z / sigma_d^2)
NodeGaussian update_leaf_node(const TruncatedTree& tree, const TreeLayout& layout,
                              std::span<const SequenceVarState> states, const LatentTable& latents,
                              const NodeId& p);

/// Internal nodes average the parent mean with the children means;
/// 1/sigma^2 = (1 + |ch|) / sigma_n^2. No data term.
NodeGaussian update_internal_node(const TruncatedTree& tree, const NodeId& p);

/// gamma0 = 1 + mass on paths through e; gamma1 = gamma* + mass on paths to
/// the right of e.
BetaParams update_edge_beta(const SequenceVarState& state, const TreeLayout& layout,
                            const EdgeId& e, double gamma_star);

/// E_q[log pi_p] for every retained path of one sequence: digamma terms over
/// stick edges on the path plus (1 - v) terms for edges left of it.
Eigen::VectorXd expected_log_path_prior(const SequenceVarState& state, const TreeLayout& layout);

/// q(c_mn) over the retained paths. Scores are formed in log space and
/// max-shifted before exponentiation. Throws RenormalizationError if no
/// finite score exists.
Eigen::VectorXd update_path_assignment(const SequenceVarState& state, const TruncatedTree& tree,
                                       const TreeLayout& layout, const LatentTable& latents,
                                       int m, int n);

/// Updates phi for every element of one sequence, then its stick Betas.
void update_sequence(SequenceVarState& state, const TreeLayout& layout, const NodeParams& nodes,
                     const Hyperparams& hyper, const Eigen::MatrixXd& z);

/// The evidence lower bound split into its expected log-joint terms and the
/// entropies of the variational factors.
struct ElboTerms {
  double node_prior = 0.0;   // sum_p E log N(alpha_p | alpha_par, sigma_n^2)
  double stick_prior = 0.0;  // sum_{m,e} E log Beta(v_me | 1, gamma*)
  double path_prior = 0.0;   // sum_{m,n} E log p(c_mn | V_m)
  double emission = 0.0;     // sum_{m,n} E log N(z_mn | alpha_c, sigma_d^2)
  double node_entropy = 0.0;
  double stick_entropy = 0.0;
  double path_entropy = 0.0;

  double total() const {
    return node_prior + stick_prior + path_prior + emission + node_entropy + stick_entropy +
           path_entropy;
  }
};

ElboTerms compute_elbo(const TruncatedTree& tree, std::span<const SequenceVarState> states,
                       const LatentTable& latents);

/// One coordinate-ascent pass: all path assignments, then all stick Betas
/// (both per sequence, parallel over sequences under Exec::parallel), then
/// every leaf, then internal nodes bottom-up.
void vi_sweep(TruncatedTree& tree, std::vector<SequenceVarState>& states,
              const LatentTable& latents, Exec exec = Exec::serial);

}  // namespace hvae
