#include "hvae/generative.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "hvae/errors.hpp"

namespace hvae {

namespace {

Eigen::VectorXd standard_normal(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

// Unit-norm columns; orthonormal when k <= dim.
Eigen::MatrixXd random_directions(int dim, int k, Rng& rng) {
  Eigen::MatrixXd g(dim, k);
  for (int j = 0; j < k; ++j) g.col(j) = standard_normal(dim, rng);
  if (k <= dim) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(dim, k);
  }
  g.colwise().normalize();
  return g;
}

}  // namespace

TruncatedTree build_tree_shape(const std::vector<int>& branching, const Hyperparams& hyper) {
  TruncatedTree tree(hyper);
  std::function<void(const NodeId&, std::size_t)> grow = [&](const NodeId& id, std::size_t level) {
    if (level >= branching.size()) return;
    if (branching[level] < 1) throw InputError("branching factors must be positive");
    for (int i = 0; i < branching[level]; ++i) {
      tree.add_child(id, hyper.alpha_star, hyper.sigma_n);
    }
    for (int i = 1; i <= branching[level]; ++i) grow(id.child(i), level + 1);
  };
  grow(NodeId::root(), 0);
  return tree;
}

NodeParamMap sample_node_params(const TruncatedTree& shape, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const double sn = shape.hyper().sigma_n;
  NodeParamMap out;
  std::function<void(const TreeNode&, const Eigen::VectorXd&)> visit =
      [&](const TreeNode& node, const Eigen::VectorXd& parent_alpha) {
        Eigen::VectorXd alpha = parent_alpha + sn * standard_normal(shape.dim(), rng);
        for (const auto& c : node.children) visit(c, alpha);
        out.emplace(node.id, std::move(alpha));
      };
  visit(shape.root(), shape.hyper().alpha_star);
  return out;
}

EdgeWeights draw_edge_weights(const TruncatedTree& shape, double gamma_star, Rng& rng) {
  if (!(gamma_star > 0.0)) throw InputError("gamma_star must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EdgeWeights v;
  std::function<void(const TreeNode&)> visit = [&](const TreeNode& node) {
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      const bool absorbing = i + 1 == node.children.size();
      // Beta(1, g) by inversion: 1 - U^(1/g)
      v[EdgeId(node.children[i].id)] =
          absorbing ? 1.0 : 1.0 - std::pow(1.0 - unif(rng), 1.0 / gamma_star);
      visit(node.children[i]);
    }
  };
  visit(shape.root());
  return v;
}

std::vector<NodeId> sample_paths(const TruncatedTree& shape, const EdgeWeights& v, int n, Rng& rng) {
  const auto leaves = enumerate_paths(shape);
  std::vector<double> mass;
  mass.reserve(leaves.size());
  for (const auto& p : leaves) mass.push_back(path_mass(v, p));
  std::discrete_distribution<std::size_t> pick(mass.begin(), mass.end());
  std::vector<NodeId> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(leaves[pick(rng)]);
  return out;
}

SequenceSample sample_sequence(const TruncatedTree& shape, const NodeParamMap& params,
                               double gamma_star, int n_elems, double sigma_d,
                               std::uint64_t seed) {
  if (n_elems < 1) throw InputError("a sequence needs at least one element");
  if (sigma_d < 0.0) throw InputError("sigma_d must be non-negative");
  Rng rng = make_rng(seed);
  SequenceSample out;
  out.v = draw_edge_weights(shape, gamma_star, rng);
  out.paths = sample_paths(shape, out.v, n_elems, rng);
  out.z.resize(shape.dim(), n_elems);
  for (int n = 0; n < n_elems; ++n) {
    auto it = params.find(out.paths[static_cast<std::size_t>(n)]);
    if (it == params.end()) throw InputError("missing parameter for leaf");
    out.z.col(n) = it->second + sigma_d * standard_normal(shape.dim(), rng);
  }
  return out;
}

std::pair<Corpus, GroundTruth> synth_corpus(const SynthConfig& cfg) {
  if (cfg.branching.empty()) throw InputError("branching needs at least one level");
  if (cfg.feature_dim < cfg.latent_dim) {
    throw InputError("feature_dim must be at least the generating latent dimension");
  }
  if (cfg.lift == Lift::identity && cfg.feature_dim != cfg.latent_dim) {
    throw InputError("identity lift needs feature_dim == latent_dim");
  }
  if (cfg.n_seqs < 1 || cfg.elems_per_seq < 1) throw InputError("corpus must be non-empty");

  Hyperparams hyper;
  hyper.alpha_star = Eigen::VectorXd::Zero(cfg.latent_dim);
  hyper.gamma_star = cfg.gamma_star;
  hyper.sigma_n = 1.0;
  hyper.sigma_d = cfg.sigma_d > 0.0 ? cfg.sigma_d : 1.0;

  GroundTruth truth{build_tree_shape(cfg.branching, hyper), {}, {}, {}};
  Rng layout_rng = make_rng(cfg.seed, {0});
  std::function<void(TreeNode&, double)> place = [&](TreeNode& node, double scale) {
    if (node.is_leaf()) return;
    const auto k = static_cast<int>(node.children.size());
    const Eigen::MatrixXd dirs = random_directions(cfg.latent_dim, k, layout_rng);
    for (int i = 0; i < k; ++i) {
      auto& child = node.children[static_cast<std::size_t>(i)];
      child.mu = node.mu + scale * dirs.col(i);
      place(child, scale * cfg.level_shrink);
    }
  };
  place(truth.tree.root(), cfg.separation);

  NodeParamMap params;
  std::function<void(const TreeNode&)> collect = [&](const TreeNode& node) {
    params.emplace(node.id, node.mu);
    for (const auto& c : node.children) collect(c);
  };
  collect(truth.tree.root());

  Rng lift_rng = make_rng(cfg.seed, {1});
  truth.lift = cfg.lift == Lift::identity
                   ? Eigen::MatrixXd::Identity(cfg.feature_dim, cfg.latent_dim)
                   : random_directions(cfg.feature_dim, cfg.latent_dim, lift_rng);

  const auto leaves = enumerate_paths(truth.tree);
  std::map<NodeId, int> leaf_index;
  for (std::size_t i = 0; i < leaves.size(); ++i) leaf_index[leaves[i]] = static_cast<int>(i);

  Corpus corpus;
  Rng noise_rng = make_rng(cfg.seed, {2});
  for (int m = 0; m < cfg.n_seqs; ++m) {
    const auto seq_seed = make_rng(cfg.seed, {3, static_cast<std::uint64_t>(m)})();
    auto sample = sample_sequence(truth.tree, params, cfg.gamma_star, cfg.elems_per_seq,
                                  cfg.sigma_d, seq_seed);
    Eigen::MatrixXd x = truth.lift * sample.z;
    std::vector<std::optional<int>> labels;
    for (int n = 0; n < cfg.elems_per_seq; ++n) {
      if (cfg.noise > 0.0) x.col(n) += cfg.noise * standard_normal(cfg.feature_dim, noise_rng);
      labels.emplace_back(leaf_index.at(sample.paths[static_cast<std::size_t>(n)]));
    }
    corpus.sequences.push_back(std::move(x));
    corpus.labels.push_back(std::move(labels));
    truth.path_of.push_back(std::move(sample.paths));
    truth.latents.push_back(std::move(sample.z));
  }
  return {std::move(corpus), std::move(truth)};
}

double separation_ratio(const GroundTruth& truth, const SynthConfig& cfg) {
  const auto leaves = enumerate_paths(truth.tree);
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      min_dist = std::min(min_dist,
                          (truth.tree.at(leaves[i]).mu - truth.tree.at(leaves[j]).mu).norm());
    }
  }
  const double spread = std::sqrt(cfg.sigma_d * cfg.sigma_d + cfg.noise * cfg.noise);
  return spread > 0.0 ? min_dist / spread : std::numeric_limits<double>::infinity();
}

}  // namespace hvae
