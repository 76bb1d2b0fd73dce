#include "hvae/variational.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hvae/errors.hpp"
#include "hvae/kernels.hpp"
#include "hvae/special.hpp"

namespace hvae {

SequenceVarState SequenceVarState::uniform(const TreeLayout& layout, int n_elems,
                                           double gamma_star) {
  SequenceVarState s;
  s.beta.assign(static_cast<std::size_t>(layout.edge_count()), BetaParams{1.0, gamma_star});
  s.phi = Eigen::MatrixXd::Constant(layout.path_count(), n_elems, 1.0 / layout.path_count());
  return s;
}

bool SequenceVarState::operator==(const SequenceVarState& other) const {
  return beta == other.beta && phi.rows() == other.phi.rows() && phi.cols() == other.phi.cols() &&
         phi == other.phi;
}

LatentTable LatentTable::from_codes(std::vector<Eigen::MatrixXd> codes) {
  LatentTable t;
  t.z_mean = codes;
  for (const auto& c : codes) t.z_stdev.push_back(Eigen::MatrixXd::Ones(c.rows(), c.cols()));
  t.z = std::move(codes);
  return t;
}

NodeGaussian update_leaf_node(const TruncatedTree& tree, const TreeLayout& layout,
                              std::span<const SequenceVarState> states, const LatentTable& latents,
                              const NodeId& p) {
  const int v = layout.node_index(p);
  if (v < 0 || layout.node_path[static_cast<std::size_t>(v)] < 0) {
    throw InvalidPathError(p.dotted() + " is not a leaf");
  }
  const int path = layout.node_path[static_cast<std::size_t>(v)];
  const auto& h = tree.hyper();
  const Eigen::VectorXd& mu_par = p.is_root() ? h.alpha_star : tree.at(p.parent()).mu;

  double mass = 0.0;
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(tree.dim());
  for (std::size_t m = 0; m < states.size(); ++m) {
    const auto& phi = states[m].phi;
    for (Eigen::Index n = 0; n < phi.cols(); ++n) {
      const double w = phi(path, n);
      mass += w;
      wsum += w * latents.z[m].col(n);
    }
  }
  const double sn2 = h.sigma_n * h.sigma_n;
  const double sd2 = h.sigma_d * h.sigma_d;
  const double var = 1.0 / (1.0 / sn2 + mass / sd2);
  return {var * (mu_par / sn2 + wsum / sd2), std::sqrt(var)};
}

NodeGaussian update_internal_node(const TruncatedTree& tree, const NodeId& p) {
  const TreeNode& node = tree.at(p);
  if (node.is_leaf()) throw InvalidPathError(p.dotted() + " is not an internal node");
  const auto& h = tree.hyper();
  Eigen::VectorXd acc = p.is_root() ? h.alpha_star : tree.at(p.parent()).mu;
  for (const auto& c : node.children) acc += c.mu;
  const double count = 1.0 + static_cast<double>(node.children.size());
  return {acc / count, h.sigma_n / std::sqrt(count)};
}

BetaParams update_edge_beta(const SequenceVarState& state, const TreeLayout& layout,
                            const EdgeId& e, double gamma_star) {
  const int edge = layout.edge_index(e);
  if (edge < 0) throw InvalidPathError("no edge to " + e.child.dotted());
  const Eigen::VectorXd totals = state.phi.rowwise().sum();
  BetaParams out{1.0, gamma_star};
  for (int p = 0; p < layout.path_count(); ++p) {
    const auto& on = layout.path_on[static_cast<std::size_t>(p)];
    const auto& left = layout.path_left[static_cast<std::size_t>(p)];
    if (std::find(on.begin(), on.end(), edge) != on.end()) out.gamma0 += totals(p);
    if (std::find(left.begin(), left.end(), edge) != left.end()) out.gamma1 += totals(p);
  }
  return out;
}

namespace {

struct StickExpectations {
  std::vector<double> log_v;       // E log v_e
  std::vector<double> log_one_mv;  // E log (1 - v_e)
};

StickExpectations stick_expectations(const SequenceVarState& state, const TreeLayout& layout) {
  StickExpectations s;
  const auto E = static_cast<std::size_t>(layout.edge_count());
  s.log_v.assign(E, 0.0);
  s.log_one_mv.assign(E, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    if (layout.edge_absorbing[e]) continue;
    const auto& b = state.beta[e];
    const double total = digamma(b.gamma0 + b.gamma1);
    s.log_v[e] = digamma(b.gamma0) - total;
    s.log_one_mv[e] = digamma(b.gamma1) - total;
  }
  return s;
}

void check_state_shape(const SequenceVarState& state, const TreeLayout& layout) {
  if (state.beta.size() != static_cast<std::size_t>(layout.edge_count()) ||
      state.phi.rows() != layout.path_count()) {
    throw InputError("variational state does not match the tree shape");
  }
}

// Log-space softmax of `scores` into `out`.
void normalize_scores(const Eigen::VectorXd& scores, Eigen::Ref<Eigen::VectorXd> out) {
  const double top = scores.maxCoeff();
  if (!std::isfinite(top)) throw RenormalizationError("path scores are not finite");
  out = (scores.array() - top).exp();
  const double z = out.sum();
  if (!(z > 0.0) || !std::isfinite(z)) throw RenormalizationError("path weights failed to normalize");
  out /= z;
}

Eigen::VectorXd path_scores(const Eigen::VectorXd& prior, const TreeLayout& layout,
                            const NodeParams& nodes, const Hyperparams& h,
                            const Eigen::VectorXd& z) {
  const double inv2sd2 = 0.5 / (h.sigma_d * h.sigma_d);
  const double dim = static_cast<double>(z.size());
  Eigen::VectorXd scores(layout.path_count());
  for (int p = 0; p < layout.path_count(); ++p) {
    const int v = layout.leaves[static_cast<std::size_t>(p)];
    const double sp = nodes.sigma(v);
    scores(p) = prior(p) - inv2sd2 * ((z - nodes.mu.col(v)).squaredNorm() + dim * sp * sp);
  }
  return scores;
}

}  // namespace

Eigen::VectorXd expected_log_path_prior(const SequenceVarState& state, const TreeLayout& layout) {
  check_state_shape(state, layout);
  const auto s = stick_expectations(state, layout);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(layout.path_count());
  for (int p = 0; p < layout.path_count(); ++p) {
    for (int e : layout.path_on[static_cast<std::size_t>(p)]) out(p) += s.log_v[static_cast<std::size_t>(e)];
    for (int e : layout.path_left[static_cast<std::size_t>(p)]) {
      out(p) += s.log_one_mv[static_cast<std::size_t>(e)];
    }
  }
  return out;
}

Eigen::VectorXd update_path_assignment(const SequenceVarState& state, const TruncatedTree& tree,
                                       const TreeLayout& layout, const LatentTable& latents,
                                       int m, int n) {
  const NodeParams nodes = NodeParams::gather(tree, layout);
  const Eigen::VectorXd prior = expected_log_path_prior(state, layout);
  const Eigen::VectorXd z = latents.z[static_cast<std::size_t>(m)].col(n);
  Eigen::VectorXd phi(layout.path_count());
  normalize_scores(path_scores(prior, layout, nodes, tree.hyper(), z), phi);
  return phi;
}

void update_sequence(SequenceVarState& state, const TreeLayout& layout, const NodeParams& nodes,
                     const Hyperparams& hyper, const Eigen::MatrixXd& z) {
  const Eigen::VectorXd prior = expected_log_path_prior(state, layout);
  state.phi.resize(layout.path_count(), z.cols());
  for (Eigen::Index n = 0; n < z.cols(); ++n) {
    normalize_scores(path_scores(prior, layout, nodes, hyper, z.col(n)), state.phi.col(n));
  }

  const Eigen::VectorXd totals = state.phi.rowwise().sum();
  for (auto& b : state.beta) b = BetaParams{1.0, hyper.gamma_star};
  for (int p = 0; p < layout.path_count(); ++p) {
    for (int e : layout.path_on[static_cast<std::size_t>(p)]) {
      if (!layout.edge_absorbing[static_cast<std::size_t>(e)]) {
        state.beta[static_cast<std::size_t>(e)].gamma0 += totals(p);
      }
    }
    for (int e : layout.path_left[static_cast<std::size_t>(p)]) {
      state.beta[static_cast<std::size_t>(e)].gamma1 += totals(p);
    }
  }
}

ElboTerms compute_elbo(const TruncatedTree& tree, std::span<const SequenceVarState> states,
                       const LatentTable& latents) {
  const auto layout = TreeLayout::build(tree);
  const auto nodes = NodeParams::gather(tree, layout);
  const auto& h = tree.hyper();
  const double D = tree.dim();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double sn2 = h.sigma_n * h.sigma_n;
  const double sd2 = h.sigma_d * h.sigma_d;

  ElboTerms t;
  for (int v = 0; v < layout.node_count(); ++v) {
    const int par = layout.parent[static_cast<std::size_t>(v)];
    const Eigen::VectorXd& mu_par = par < 0 ? h.alpha_star : Eigen::VectorXd(nodes.mu.col(par));
    const double var_par = par < 0 ? 0.0 : nodes.sigma(par) * nodes.sigma(par);
    const double var = nodes.sigma(v) * nodes.sigma(v);
    t.node_prior += -0.5 * D * (log2pi + std::log(sn2)) -
                    ((nodes.mu.col(v) - mu_par).squaredNorm() + D * var + D * var_par) / (2.0 * sn2);
    t.node_entropy += 0.5 * D * (1.0 + log2pi + std::log(var));
  }

  const double log_gamma_star = std::log(h.gamma_star);
  for (std::size_t m = 0; m < states.size(); ++m) {
    const auto& s = states[m];
    check_state_shape(s, layout);
    for (int e = 0; e < layout.edge_count(); ++e) {
      if (layout.edge_absorbing[static_cast<std::size_t>(e)]) continue;
      const double a = s.beta[static_cast<std::size_t>(e)].gamma0;
      const double b = s.beta[static_cast<std::size_t>(e)].gamma1;
      const double dab = digamma(a + b);
      t.stick_prior += log_gamma_star + (h.gamma_star - 1.0) * (digamma(b) - dab);
      const double log_beta_fn = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
      t.stick_entropy +=
          log_beta_fn - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * dab;
    }

    const Eigen::VectorXd prior = expected_log_path_prior(s, layout);
    const auto& z = latents.z[m];
    for (Eigen::Index n = 0; n < s.phi.cols(); ++n) {
      for (int p = 0; p < layout.path_count(); ++p) {
        const double w = s.phi(p, n);
        if (w <= 0.0) continue;
        const int v = layout.leaves[static_cast<std::size_t>(p)];
        const double var = nodes.sigma(v) * nodes.sigma(v);
        t.path_prior += w * prior(p);
        t.emission += w * (-0.5 * D * (log2pi + std::log(sd2)) -
                           ((z.col(n) - nodes.mu.col(v)).squaredNorm() + D * var) / (2.0 * sd2));
        t.path_entropy -= w * std::log(w);
      }
    }
  }
  return t;
}

void vi_sweep(TruncatedTree& tree, std::vector<SequenceVarState>& states,
              const LatentTable& latents, Exec exec) {
  const auto layout = TreeLayout::build(tree);
  if (states.size() != latents.z.size()) {
    throw InputError("variational states and latent table disagree on sequence count");
  }
  for (const auto& s : states) check_state_shape(s, layout);
  NodeParams nodes = NodeParams::gather(tree, layout);
  const auto& h = tree.hyper();

  kernels::fit_sequences(exec, layout, nodes, h, states, latents);
  const auto stats = kernels::leaf_stats(exec, layout, states, latents, tree.dim());

  const double sn2 = h.sigma_n * h.sigma_n;
  const double sd2 = h.sigma_d * h.sigma_d;
  for (int p = 0; p < layout.path_count(); ++p) {
    const int v = layout.leaves[static_cast<std::size_t>(p)];
    const int par = layout.parent[static_cast<std::size_t>(v)];
    const Eigen::VectorXd mu_par = par < 0 ? h.alpha_star : Eigen::VectorXd(nodes.mu.col(par));
    const double var = 1.0 / (1.0 / sn2 + stats.mass(p) / sd2);
    nodes.mu.col(v) = var * (mu_par / sn2 + stats.weighted_sum.col(p) / sd2);
    nodes.sigma(v) = std::sqrt(var);
  }
  for (int v : layout.internal_post_order) {
    const int par = layout.parent[static_cast<std::size_t>(v)];
    Eigen::VectorXd acc = par < 0 ? h.alpha_star : Eigen::VectorXd(nodes.mu.col(par));
    const auto& kids = layout.children[static_cast<std::size_t>(v)];
    for (int c : kids) acc += nodes.mu.col(c);
    const double count = 1.0 + static_cast<double>(kids.size());
    nodes.mu.col(v) = acc / count;
    nodes.sigma(v) = h.sigma_n / std::sqrt(count);
  }
  nodes.scatter(tree, layout);
}

}  // namespace hvae
