#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "hvae/errors.hpp"
#include "hvae/eval.hpp"
#include "hvae/generative.hpp"
#include "hvae/variational.hpp"
#include "oracles.hpp"

using namespace hvae;

namespace {

struct Instance {
  TruncatedTree tree;
  TreeLayout layout;
  std::vector<SequenceVarState> states;
  LatentTable latents;
};

Instance random_instance(Rng& rng, int max_leaves = 8, int seqs = 3) {
  Instance in;
  in.tree = oracle::random_tree(rng, 3, max_leaves);
  in.layout = TreeLayout::build(in.tree);
  std::vector<Eigen::MatrixXd> z;
  for (int m = 0; m < seqs; ++m) {
    const int n = std::uniform_int_distribution<int>(1, 20)(rng);
    in.states.push_back(oracle::random_state(in.layout, n, rng));
    z.push_back(oracle::random_codes(3, n, rng));
  }
  in.latents = LatentTable::from_codes(std::move(z));
  return in;
}

double elbo(const Instance& in) { return compute_elbo(in.tree, in.states, in.latents).total(); }

Hyperparams unit_hyper(int dim) {
  Hyperparams h;
  h.alpha_star = Eigen::VectorXd::Zero(dim);
  h.sigma_n = 1.0;
  h.sigma_d = 1.0;
  return h;
}

double max_abs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("variational") {

TEST_CASE("leaf update: prior recovery and equal-precision average") {
  TruncatedTree t(unit_hyper(2));
  t.root().mu = Eigen::Vector2d(1.0, -2.0);
  t.add_child(NodeId::root(), Eigen::Vector2d(5, 5), 0.3);
  t.add_child(NodeId::root(), Eigen::Vector2d(0, 0), 0.3);
  const auto layout = TreeLayout::build(t);
  SequenceVarState s = SequenceVarState::uniform(layout, 1, 1.0);
  s.phi << 0.0, 1.0;
  const auto lat = LatentTable::from_codes({Eigen::MatrixXd(Eigen::Vector2d(3.0, 4.0))});
  const std::vector states{s};

  const auto empty = update_leaf_node(t, layout, states, lat, NodeId({1, 1}));
  CHECK(empty.sigma == 1.0);
  CHECK(empty.mu == t.root().mu);

  const auto one = update_leaf_node(t, layout, states, lat, NodeId({1, 2}));
  CHECK(one.sigma * one.sigma == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(max_abs(one.mu, (t.root().mu + Eigen::Vector2d(3.0, 4.0)) / 2.0) <= 1e-15);
  CHECK_THROWS_AS(update_leaf_node(t, layout, states, lat, NodeId::root()), InvalidPathError);
}

TEST_CASE("leaf update matches the conjugate posterior") {
  Rng rng = make_rng(21);
  Hyperparams h = unit_hyper(4);
  h.sigma_n = 1.7;
  h.sigma_d = 0.4;
  TruncatedTree t(h);
  t.add_child(NodeId::root(), oracle::gaussian_vector(4, rng), 1.0);
  t.add_child(NodeId::root(), oracle::gaussian_vector(4, rng), 1.0);
  const auto layout = TreeLayout::build(t);
  std::vector<SequenceVarState> states{oracle::random_state(layout, 50, rng)};
  const auto lat = LatentTable::from_codes({oracle::random_codes(4, 50, rng)});
  for (const auto& leaf : enumerate_paths(t)) {
    const auto got = update_leaf_node(t, layout, states, lat, leaf);
    const auto ref = oracle::leaf_posterior(t, states, lat.z, leaf);
    CHECK(max_abs(got.mu, ref.mu) <= 1e-10);
    CHECK(std::abs(got.sigma - ref.sigma) <= 1e-10);
  }
}

TEST_CASE("internal update") {
  Hyperparams h = unit_hyper(2);
  h.alpha_star = Eigen::Vector2d(1.0, 1.0);
  h.sigma_n = 2.0;
  TruncatedTree t(h);
  t.add_child(NodeId::root(), Eigen::Vector2d(4, 0), 1.0);
  t.add_child(NodeId::root(), Eigen::Vector2d(-2, 3), 1.0);
  const auto r = update_internal_node(t, NodeId::root());
  CHECK(max_abs(r.mu, Eigen::Vector2d(1.0, 4.0 / 3.0)) <= 1e-15);
  CHECK(r.sigma * r.sigma == doctest::Approx(4.0 / 3.0).epsilon(1e-15));

  TruncatedTree single(h);
  single.root().mu = Eigen::Vector2d(0.5, 0.5);
  single.add_child(NodeId::root(), Eigen::Vector2d(0.5, 0.5), 1.0);
  single.add_child(NodeId({1, 1}), Eigen::Vector2d(0.5, 0.5), 1.0);
  CHECK(update_internal_node(single, NodeId({1, 1})).mu == Eigen::Vector2d(0.5, 0.5));
  CHECK_THROWS_AS(update_internal_node(t, NodeId({1, 1})), InvalidPathError);

  Rng rng = make_rng(2);
  TruncatedTree five(h);
  for (int i = 0; i < 5; ++i) five.add_child(NodeId::root(), oracle::gaussian_vector(2, rng), 1.0);
  const auto got = update_internal_node(five, NodeId::root());
  const auto ref = oracle::internal_posterior(five, NodeId::root());
  CHECK(max_abs(got.mu, ref.mu) <= 1e-12);
  CHECK(std::abs(got.sigma - ref.sigma) <= 1e-12);
}

TEST_CASE("edge beta") {
  Hyperparams h = unit_hyper(1);
  h.gamma_star = 0.7;
  TruncatedTree t(h);
  for (int i = 0; i < 2; ++i) t.add_child(NodeId::root(), Eigen::VectorXd::Zero(1), 1.0);
  for (int i = 0; i < 2; ++i) t.add_child(NodeId({1, 1}), Eigen::VectorXd::Zero(1), 1.0);
  for (int i = 0; i < 2; ++i) t.add_child(NodeId({1, 2}), Eigen::VectorXd::Zero(1), 1.0);
  const auto layout = TreeLayout::build(t);
  // paths: 1.1.1, 1.1.2, 1.2.1, 1.2.2
  SequenceVarState s = SequenceVarState::uniform(layout, 1, h.gamma_star);
  s.phi << 1.0, 0.0, 0.0, 0.0;
  CHECK(update_edge_beta(s, layout, EdgeId(NodeId({1, 1, 1})), h.gamma_star) == BetaParams{2.0, 0.7});
  CHECK(update_edge_beta(s, layout, EdgeId(NodeId({1, 2, 1})), h.gamma_star) == BetaParams{1.0, 0.7});
  s.phi << 0.0, 0.0, 1.0, 0.0;
  CHECK(update_edge_beta(s, layout, EdgeId(NodeId({1, 1, 1})), h.gamma_star) == BetaParams{1.0, 0.7});

  Rng rng = make_rng(8);
  const auto r = oracle::random_state(layout, 30, rng);
  for (int e = 0; e < layout.edge_count(); ++e) {
    const NodeId& child = layout.nodes[static_cast<std::size_t>(layout.edge_node[static_cast<std::size_t>(e)])];
    const auto got = update_edge_beta(r, layout, EdgeId(child), h.gamma_star);
    const auto ref = oracle::edge_beta(t, r, child);
    CHECK(std::abs(got.gamma0 - ref.gamma0) <= 1e-12);
    CHECK(std::abs(got.gamma1 - ref.gamma1) <= 1e-12);
  }
}

TEST_CASE("edge beta totals per parent") {
  // sum over non-absorbing siblings of (gamma0 - 1) plus the mass of the
  // rightmost subtree equals the mass reaching the parent
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = oracle::random_tree(rng, 2, 8);
    const auto layout = TreeLayout::build(t);
    const auto s = oracle::random_state(layout, 10, rng);
    const Eigen::VectorXd mass = s.phi.rowwise().sum();
    for (int v = 0; v < layout.node_count(); ++v) {
      const auto& kids = layout.children[static_cast<std::size_t>(v)];
      if (kids.empty()) continue;
      const NodeId& parent = layout.nodes[static_cast<std::size_t>(v)];
      double reaching = 0.0, rightmost = 0.0, sum = 0.0;
      for (int p = 0; p < layout.path_count(); ++p) {
        const NodeId& leaf = layout.nodes[static_cast<std::size_t>(layout.leaves[static_cast<std::size_t>(p)])];
        if (parent.is_prefix_of(leaf)) reaching += mass(p);
        const NodeId& last = layout.nodes[static_cast<std::size_t>(kids.back())];
        if (last == leaf || last.is_prefix_of(leaf)) rightmost += mass(p);
      }
      for (std::size_t i = 0; i + 1 < kids.size(); ++i) {
        sum += update_edge_beta(s, layout, EdgeId(layout.nodes[static_cast<std::size_t>(kids[i])]), t.hyper().gamma_star).gamma0 - 1.0;
      }
      CHECK(std::abs(sum + rightmost - reaching) <= 1e-9);
    }
  }
}

TEST_CASE("path assignment") {
  TruncatedTree root_only(unit_hyper(2));
  const auto l1 = TreeLayout::build(root_only);
  const auto lat = LatentTable::from_codes({Eigen::MatrixXd(Eigen::Vector2d(3.0, 1.0))});
  CHECK(update_path_assignment(SequenceVarState::uniform(l1, 1, 1.0), root_only, l1, lat, 0, 0) ==
        Eigen::VectorXd::Ones(1));

  TruncatedTree sym(unit_hyper(2));
  sym.add_child(NodeId::root(), Eigen::Vector2d(2.0, 1.0), 0.5);
  sym.add_child(NodeId::root(), Eigen::Vector2d(4.0, 1.0), 0.5);
  const auto l2 = TreeLayout::build(sym);
  SequenceVarState s = SequenceVarState::uniform(l2, 1, 1.0);
  // E log v = E log (1 - v) makes both paths' prior terms equal
  s.beta[0] = {2.0, 2.0};
  const auto phi = update_path_assignment(s, sym, l2, lat, 0, 0);
  CHECK(std::abs(phi(0) - 0.5) <= 1e-15);
  CHECK(std::abs(phi(1) - 0.5) <= 1e-15);

  s.beta[0] = {3.0, 1.5};
  sym.hyper().sigma_d = 0.7;
  const auto got = update_path_assignment(s, sym, l2, lat, 0, 0);
  CHECK(max_abs(got, oracle::path_assignment(sym, s, lat.z[0].col(0))) <= 1e-10);
}

TEST_CASE("path assignment does not underflow far from every leaf") {
  TruncatedTree t(unit_hyper(2));
  t.hyper().sigma_d = 1e-3;
  t.add_child(NodeId::root(), Eigen::Vector2d(0.0, 0.0), 0.1);
  t.add_child(NodeId::root(), Eigen::Vector2d(1.0, 0.0), 0.1);
  const auto layout = TreeLayout::build(t);
  const auto lat = LatentTable::from_codes({Eigen::MatrixXd(Eigen::Vector2d(1e4, 0.0))});
  const auto phi = update_path_assignment(SequenceVarState::uniform(layout, 1, 1.0), t, layout, lat, 0, 0);
  CHECK(phi(1) == 1.0);

  const auto bad = LatentTable::from_codes({Eigen::MatrixXd(Eigen::Vector2d(std::numeric_limits<double>::quiet_NaN(), 0.0))});
  CHECK_THROWS_AS(update_path_assignment(SequenceVarState::uniform(layout, 1, 1.0), t, layout, bad, 0, 0),
                  RenormalizationError);
}

TEST_CASE("random instances match oracles") {
  Rng rng = make_rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const auto in = random_instance(rng);
    for (const auto& id : in.layout.nodes) {
      if (in.tree.at(id).is_leaf()) {
        const auto got = update_leaf_node(in.tree, in.layout, in.states, in.latents, id);
        const auto ref = oracle::leaf_posterior(in.tree, in.states, in.latents.z, id);
        CHECK(max_abs(got.mu, ref.mu) <= 1e-10);
      } else {
        const auto got = update_internal_node(in.tree, id);
        CHECK(max_abs(got.mu, oracle::internal_posterior(in.tree, id).mu) <= 1e-10);
      }
    }
    const auto& s = in.states[0];
    for (Eigen::Index n = 0; n < s.phi.cols(); ++n) {
      const auto got = update_path_assignment(s, in.tree, in.layout, in.latents, 0, static_cast<int>(n));
      CHECK(max_abs(got, oracle::path_assignment(in.tree, s, in.latents.z[0].col(n))) <= 1e-10);
    }
  }
}

TEST_CASE("elbo of a single leaf and a single point") {
  Hyperparams h = unit_hyper(2);
  h.sigma_n = 2.0;
  h.sigma_d = 0.5;
  TruncatedTree t(h);
  t.root().mu = Eigen::Vector2d(0.5, -1.0);
  t.root().sigma = 0.3;
  const auto layout = TreeLayout::build(t);
  const std::vector states{SequenceVarState::uniform(layout, 1, 1.0)};
  const auto lat = LatentTable::from_codes({Eigen::MatrixXd(Eigen::Vector2d(1.0, 0.0))});
  const double pi = std::numbers::pi;
  // node prior: -log(2 pi 4) - (1.25 + 2 * 0.09) / 8
  // entropy:    1 + log(2 pi) + log(0.09)
  // emission:   -log(2 pi 0.25) - (0.25 + 1 + 0.18) / 0.5
  const double expect = (-std::log(8.0 * pi) - 1.43 / 8.0) + (1.0 + std::log(2.0 * pi) + std::log(0.09)) +
                        (-std::log(pi / 2.0) - 1.43 / 0.5);
  const auto terms = compute_elbo(t, states, lat);
  CHECK(std::abs(terms.total() - expect) <= 1e-8);
  CHECK(terms.path_prior == 0.0);
  CHECK(terms.path_entropy == 0.0);
  CHECK(terms.stick_prior == 0.0);
}

TEST_CASE("doubling sigma_d changes only the emission term") {
  Rng rng = make_rng(5);
  auto in = random_instance(rng);
  const auto before = compute_elbo(in.tree, in.states, in.latents);
  const double sd = in.tree.hyper().sigma_d;
  in.tree.hyper().sigma_d = 2.0 * sd;
  const auto after = compute_elbo(in.tree, in.states, in.latents);
  CHECK(after.node_prior == before.node_prior);
  CHECK(after.stick_prior == before.stick_prior);
  CHECK(after.path_prior == before.path_prior);
  CHECK(after.node_entropy == before.node_entropy);
  CHECK(after.stick_entropy == before.stick_entropy);
  CHECK(after.path_entropy == before.path_entropy);

  // emission oracle: sum phi [ -D/2 log(2 pi s^2) - (||z - mu||^2 + D sigma_p^2) / (2 s^2) ]
  const double s2 = 4.0 * sd * sd;
  double ref = 0.0;
  const auto leaves = enumerate_paths(in.tree);
  for (std::size_t m = 0; m < in.states.size(); ++m) {
    for (Eigen::Index n = 0; n < in.latents.z[m].cols(); ++n) {
      for (std::size_t p = 0; p < leaves.size(); ++p) {
        const auto& node = in.tree.at(leaves[p]);
        const double w = in.states[m].phi(static_cast<Eigen::Index>(p), n);
        ref += w * (-1.5 * std::log(2.0 * std::numbers::pi * s2) -
                    ((in.latents.z[m].col(n) - node.mu).squaredNorm() + 3.0 * node.sigma * node.sigma) / (2.0 * s2));
      }
    }
  }
  CHECK(std::abs(after.emission - ref) <= 1e-9 * std::abs(ref));
}

TEST_CASE("each update alone never decreases the elbo") {
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng);
    double last = elbo(in);
    auto check_step = [&] {
      const double now = elbo(in);
      CHECK(now >= last - 1e-9);
      last = now;
    };
    for (auto& s : in.states) {
      for (Eigen::Index n = 0; n < s.phi.cols(); ++n) {
        const auto m = static_cast<int>(&s - in.states.data());
        s.phi.col(n) = update_path_assignment(s, in.tree, in.layout, in.latents, m, static_cast<int>(n));
        check_step();
      }
      for (int e = 0; e < in.layout.edge_count(); ++e) {
        if (in.layout.edge_absorbing[static_cast<std::size_t>(e)]) continue;
        s.beta[static_cast<std::size_t>(e)] = update_edge_beta(
            s, in.layout, EdgeId(in.layout.nodes[static_cast<std::size_t>(in.layout.edge_node[static_cast<std::size_t>(e)])]),
            in.tree.hyper().gamma_star);
        check_step();
      }
    }
    for (int v = in.layout.node_count() - 1; v >= 0; --v) {
      const NodeId id = in.layout.nodes[static_cast<std::size_t>(v)];
      const auto g = in.tree.at(id).is_leaf()
                         ? update_leaf_node(in.tree, in.layout, in.states, in.latents, id)
                         : update_internal_node(in.tree, id);
      in.tree.at(id).mu = g.mu;
      in.tree.at(id).sigma = g.sigma;
      check_step();
    }
  }
}

TEST_CASE("sweeps are monotone and phi stays normalized") {
  Rng rng = make_rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng);
    double last = elbo(in);
    for (int sweep = 0; sweep < 20; ++sweep) {
      vi_sweep(in.tree, in.states, in.latents);
      const double now = elbo(in);
      CHECK(now >= last - 1e-9);
      last = now;
      for (const auto& s : in.states) {
        CHECK((s.phi.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
      }
    }
  }
}

TEST_CASE("a converged sweep is a fixed point") {
  Hyperparams h = unit_hyper(2);
  h.sigma_d = 0.5;
  TruncatedTree t(h);
  t.add_child(NodeId::root(), Eigen::Vector2d(-1, 0), 1.0);
  t.add_child(NodeId::root(), Eigen::Vector2d(1, 0), 1.0);
  Rng rng = make_rng(3);
  Eigen::MatrixXd z(2, 40);
  for (int n = 0; n < 40; ++n) z.col(n) = Eigen::Vector2d(n % 2 ? 4.0 : -4.0, 0.0) + oracle::gaussian_vector(2, rng, 0.3);
  const auto lat = LatentTable::from_codes({z});
  std::vector states{SequenceVarState::uniform(TreeLayout::build(t), 40, 1.0)};
  for (int i = 0; i < 200; ++i) vi_sweep(t, states, lat);
  const auto tree_before = t;
  const auto states_before = states;
  vi_sweep(t, states, lat);
  CHECK(max_abs(states[0].phi, states_before[0].phi) <= 1e-12);
  for (const auto& id : TreeLayout::build(t).nodes) {
    CHECK(max_abs(t.at(id).mu, tree_before.at(id).mu) <= 1e-12);
    CHECK(std::abs(t.at(id).sigma - tree_before.at(id).sigma) <= 1e-12);
  }
  for (std::size_t e = 0; e < states[0].beta.size(); ++e) {
    CHECK(std::abs(states[0].beta[e].gamma0 - states_before[0].beta[e].gamma0) <= 1e-12);
  }
}

TEST_CASE("sweeps recover the generating leaves of a [3] corpus") {
  SynthConfig cfg;
  cfg.branching = {3};
  cfg.sigma_d = 0.3;
  cfg.n_seqs = 60;
  const auto [corpus, truth] = synth_corpus(cfg);

  Hyperparams h;
  h.alpha_star = Eigen::VectorXd::Zero(cfg.latent_dim);
  h.sigma_n = 10.0;
  h.sigma_d = cfg.sigma_d;
  TruncatedTree t(h);
  // farthest-first starting means from the codes
  std::vector<Eigen::VectorXd> picks{truth.latents[0].col(0)};
  while (picks.size() < 3) {
    double best = -1.0;
    Eigen::VectorXd far;
    for (const auto& z : truth.latents) {
      for (Eigen::Index n = 0; n < z.cols(); ++n) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& p : picks) d = std::min(d, (z.col(n) - p).squaredNorm());
        if (d > best) { best = d; far = z.col(n); }
      }
    }
    picks.push_back(far);
  }
  for (const auto& p : picks) t.add_child(NodeId::root(), p, 1.0);

  const auto lat = LatentTable::from_codes(truth.latents);
  std::vector<SequenceVarState> states;
  for (const auto& z : truth.latents) states.push_back(SequenceVarState::uniform(TreeLayout::build(t), static_cast<int>(z.cols()), h.gamma_star));
  for (int i = 0; i < 30; ++i) vi_sweep(t, states, lat);

  Assignments got;
  std::vector<std::vector<int>> want;
  for (std::size_t m = 0; m < states.size(); ++m) {
    got.emplace_back();
    want.emplace_back();
    for (Eigen::Index n = 0; n < states[m].phi.cols(); ++n) {
      Eigen::Index arg;
      states[m].phi.col(n).maxCoeff(&arg);
      got.back().push_back(static_cast<int>(arg));
      want.back().push_back(*corpus.labels[m][static_cast<std::size_t>(n)]);
    }
  }
  CHECK(matched_purity(got, want) >= 0.95);
}

TEST_CASE("shape mismatch is an input error") {
  Rng rng = make_rng(1);
  auto in = random_instance(rng);
  in.states[0].phi.conservativeResize(in.states[0].phi.rows() + 1, Eigen::NoChange);
  CHECK_THROWS_AS(vi_sweep(in.tree, in.states, in.latents), InputError);
}

}  // TEST_SUITE
