#include "hvae/structure.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "hvae/errors.hpp"
#include "hvae/rng.hpp"

namespace hvae {

nlohmann::json AdaptEvent::to_json() const {
  return {{"round", round},
          {"action", action},
          {"node", node.label()},
          {"metric", metric},
          {"threshold", threshold}};
}

void AdaptReport::append(const AdaptReport& other) {
  events.insert(events.end(), other.events.begin(), other.events.end());
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

namespace {

int leaf_path_index(const TreeLayout& layout, const NodeId& leaf) {
  const int v = layout.node_index(leaf);
  if (v < 0 || layout.node_path[static_cast<std::size_t>(v)] < 0) {
    throw InvalidPathError(leaf.dotted() + " is not a leaf");
  }
  return layout.node_path[static_cast<std::size_t>(v)];
}

double total_elements(std::span<const SequenceVarState> states) {
  double n = 0.0;
  for (const auto& s : states) n += static_cast<double>(s.phi.cols());
  return n;
}

void warn(AdaptReport& report, std::string msg) {
  spdlog::warn("{}", msg);
  report.warnings.push_back(std::move(msg));
}

// Rebuilds per-sequence states for `new_layout`. `old_of_new` maps a new
// node label to the old label it came from; `phi_row` gives the new phi row
// for each new path.
void rebuild_states(std::vector<SequenceVarState>& states, const TreeLayout& old_layout,
                    const TreeLayout& new_layout, const std::map<NodeId, NodeId>& old_of_new,
                    double gamma_star,
                    const std::function<Eigen::RowVectorXd(const SequenceVarState&, int)>& phi_row) {
  for (auto& s : states) {
    SequenceVarState next;
    next.beta.assign(static_cast<std::size_t>(new_layout.edge_count()), BetaParams{1.0, gamma_star});
    for (int e = 0; e < new_layout.edge_count(); ++e) {
      const NodeId& label =
          new_layout.nodes[static_cast<std::size_t>(new_layout.edge_node[static_cast<std::size_t>(e)])];
      auto it = old_of_new.find(label);
      if (it == old_of_new.end() || new_layout.edge_absorbing[static_cast<std::size_t>(e)]) continue;
      const int old_e = old_layout.edge_index(EdgeId(it->second));
      if (old_e >= 0 && !old_layout.edge_absorbing[static_cast<std::size_t>(old_e)]) {
        next.beta[static_cast<std::size_t>(e)] = s.beta[static_cast<std::size_t>(old_e)];
      }
    }
    next.phi.resize(new_layout.path_count(), s.phi.cols());
    for (int p = 0; p < new_layout.path_count(); ++p) next.phi.row(p) = phi_row(s, p);
    s = std::move(next);
  }
}

}  // namespace

double weighted_radius(const TruncatedTree& tree, const NodeId& leaf,
                       std::span<const SequenceVarState> states, const LatentTable& latents) {
  const auto layout = TreeLayout::build(tree);
  const int p = leaf_path_index(layout, leaf);
  const Eigen::VectorXd& mu = tree.at(leaf).mu;
  double mass = 0.0;
  double spread = 0.0;
  for (std::size_t m = 0; m < states.size(); ++m) {
    const auto& phi = states[m].phi;
    for (Eigen::Index n = 0; n < phi.cols(); ++n) {
      const double w = phi(p, n);
      mass += w;
      spread += w * (latents.z[m].col(n) - mu).squaredNorm();
    }
  }
  return mass > 0.0 ? std::sqrt(spread / mass) : 0.0;
}

double data_fraction(const TruncatedTree& tree, const NodeId& leaf,
                     std::span<const SequenceVarState> states) {
  const auto layout = TreeLayout::build(tree);
  const int p = leaf_path_index(layout, leaf);
  const double total = total_elements(states);
  if (total <= 0.0) return 0.0;
  double mass = 0.0;
  for (const auto& s : states) mass += s.phi.row(p).sum();
  return mass / total;
}

AdaptReport grow(TruncatedTree& tree, std::vector<SequenceVarState>& states,
                 const LatentTable& latents, const AdaptConfig& cfg, std::uint64_t seed,
                 int round) {
  if (cfg.split_arity < 2) throw InputError("split_arity must be at least 2");
  AdaptReport report;
  const auto old_layout = TreeLayout::build(tree);
  const auto leaves = enumerate_paths(tree);
  const auto& h = tree.hyper();

  int budget = cfg.max_leaves - static_cast<int>(leaves.size());
  std::set<NodeId> split;
  for (const auto& leaf : leaves) {
    const double r = weighted_radius(tree, leaf, states, latents);
    if (r <= cfg.radius_threshold) continue;
    if (budget < cfg.split_arity - 1) {
      warn(report, "leaf budget reached; not splitting " + leaf.dotted());
      break;
    }
    budget -= cfg.split_arity - 1;
    split.insert(leaf);
    report.events.push_back({round, "split", leaf, r, cfg.radius_threshold});
  }
  if (split.empty()) return report;

  for (const auto& leaf : split) {
    const Eigen::VectorXd mu = tree.at(leaf).mu;
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(round), 0x5b1f,
                              static_cast<std::uint64_t>(old_layout.node_index(leaf))});
    std::normal_distribution<double> normal(0.0, h.sigma_n / 10.0);
    for (int k = 0; k < cfg.split_arity; ++k) {
      Eigen::VectorXd child_mu = mu;
      for (Eigen::Index d = 0; d < child_mu.size(); ++d) child_mu(d) += normal(rng);
      tree.add_child(leaf, std::move(child_mu), h.sigma_n);
    }
  }

  const auto new_layout = TreeLayout::build(tree);
  std::map<NodeId, NodeId> identity;
  for (const auto& id : old_layout.nodes) identity.emplace(id, id);
  const double share = 1.0 / cfg.split_arity;
  rebuild_states(states, old_layout, new_layout, identity, h.gamma_star,
                 [&](const SequenceVarState& s, int p) -> Eigen::RowVectorXd {
                   const NodeId& leaf = new_layout.nodes[static_cast<std::size_t>(
                       new_layout.leaves[static_cast<std::size_t>(p)])];
                   const int v = old_layout.node_index(leaf);
                   if (v >= 0) return s.phi.row(old_layout.node_path[static_cast<std::size_t>(v)]);
                   const int parent_path =
                       old_layout.node_path[static_cast<std::size_t>(old_layout.node_index(leaf.parent()))];
                   return share * s.phi.row(parent_path);
                 });
  return report;
}

AdaptReport prune(TruncatedTree& tree, std::vector<SequenceVarState>& states,
                  const AdaptConfig& cfg, int round) {
  AdaptReport report;
  const auto old_layout = TreeLayout::build(tree);
  const int P = old_layout.path_count();
  if (cfg.fraction_threshold >= 1.0 / P) {
    warn(report, "fraction threshold " + std::to_string(cfg.fraction_threshold) +
                     " is not below 1/P = " + std::to_string(1.0 / P) +
                     "; every leaf may fall under it");
  }

  std::vector<double> fraction(static_cast<std::size_t>(P));
  const double total = total_elements(states);
  for (int p = 0; p < P; ++p) {
    double mass = 0.0;
    for (const auto& s : states) mass += s.phi.row(p).sum();
    fraction[static_cast<std::size_t>(p)] = total > 0.0 ? mass / total : 0.0;
  }

  std::set<NodeId> remove;
  for (int p = 0; p < P; ++p) {
    if (fraction[static_cast<std::size_t>(p)] < cfg.fraction_threshold) {
      remove.insert(old_layout.nodes[static_cast<std::size_t>(old_layout.leaves[static_cast<std::size_t>(p)])]);
    }
  }
  if (static_cast<int>(remove.size()) == P) {
    const auto best = static_cast<std::size_t>(
        std::max_element(fraction.begin(), fraction.end()) - fraction.begin());
    const NodeId& keep = old_layout.nodes[static_cast<std::size_t>(old_layout.leaves[best])];
    remove.erase(keep);
    warn(report, "every leaf is under the fraction threshold; keeping " + keep.dotted());
  }
  if (remove.empty() && P == 1) return report;

  for (int p = 0; p < P; ++p) {
    const NodeId& id = old_layout.nodes[static_cast<std::size_t>(old_layout.leaves[static_cast<std::size_t>(p)])];
    if (remove.contains(id)) {
      report.events.push_back({round, "prune", id, fraction[static_cast<std::size_t>(p)],
                               cfg.fraction_threshold});
    }
  }

  // Drop removed leaves, and internal nodes left with no children.
  std::function<bool(TreeNode&)> drop = [&](TreeNode& node) {
    if (node.is_leaf()) return remove.contains(node.id);
    std::vector<TreeNode> kept;
    for (auto& c : node.children) {
      if (!drop(c)) kept.push_back(std::move(c));
    }
    node.children = std::move(kept);
    return node.children.empty();
  };
  drop(tree.root());

  std::function<void(TreeNode&)> collapse = [&](TreeNode& node) {
    while (node.children.size() == 1) {
      report.events.push_back({round, "collapse", node.id, 1.0, 2.0});
      TreeNode only = std::move(node.children.front());
      node = std::move(only);
    }
    for (auto& c : node.children) collapse(c);
  };
  collapse(tree.root());

  const auto new_of_old = tree.relabel();
  if (report.events.empty()) return report;

  const auto new_layout = TreeLayout::build(tree);
  std::map<NodeId, NodeId> old_of_new;
  for (const auto& [o, n] : new_of_old) old_of_new.emplace(n, o);
  rebuild_states(states, old_layout, new_layout, old_of_new, tree.hyper().gamma_star,
                 [&](const SequenceVarState& s, int p) -> Eigen::RowVectorXd {
                   const NodeId& leaf = new_layout.nodes[static_cast<std::size_t>(
                       new_layout.leaves[static_cast<std::size_t>(p)])];
                   const int v = old_layout.node_index(old_of_new.at(leaf));
                   return s.phi.row(old_layout.node_path[static_cast<std::size_t>(v)]);
                 });
  for (auto& s : states) {
    for (Eigen::Index n = 0; n < s.phi.cols(); ++n) {
      const double z = s.phi.col(n).sum();
      if (z > 0.0) {
        s.phi.col(n) /= z;
      } else {
        s.phi.col(n).setConstant(1.0 / static_cast<double>(s.phi.rows()));
      }
    }
  }
  return report;
}

AdaptReport adapt(TruncatedTree& tree, std::vector<SequenceVarState>& states,
                  const LatentTable& latents, const AdaptConfig& cfg, std::uint64_t seed,
                  int round) {
  AdaptReport report;
  if (!cfg.enabled) return report;
  report.append(prune(tree, states, cfg, round));
  report.append(grow(tree, states, latents, cfg, seed, round));
  return report;
}

}  // namespace hvae
