#include <doctest.h>

#include <algorithm>
#include <set>

#include "hvae/errors.hpp"
#include "hvae/generative.hpp"
#include "oracles.hpp"

using namespace hvae;

namespace {

Hyperparams hyper(int dim, double sigma_n = 1.0) {
  Hyperparams h;
  h.alpha_star = Eigen::VectorXd::LinSpaced(dim, -1.0, 1.0);
  h.sigma_n = sigma_n;
  return h;
}

}  // namespace

TEST_SUITE("generative") {

TEST_CASE("tree shape") {
  const auto t = build_tree_shape({3, 2}, hyper(2));
  CHECK(t.leaf_count() == 6);
  CHECK(t.node_count() == 10);
  CHECK(enumerate_paths(t).back() == NodeId({1, 3, 2}));
}

TEST_CASE("node params") {
  const auto zero = build_tree_shape({2, 2}, hyper(3, 0.0));
  for (const auto& [id, alpha] : sample_node_params(zero, 5)) CHECK(alpha == zero.hyper().alpha_star);

  const auto t = build_tree_shape({2, 2}, hyper(3));
  CHECK(sample_node_params(t, 5) == sample_node_params(t, 5));
  CHECK(sample_node_params(t, 5) != sample_node_params(t, 6));
}

TEST_CASE("child offsets have the node prior variance") {
  const auto t = build_tree_shape({1}, hyper(4, 0.7));
  double sum2 = 0.0;
  const int draws = 4000;
  for (int s = 0; s < draws; ++s) {
    const auto p = sample_node_params(t, static_cast<std::uint64_t>(s));
    sum2 += (p.at(NodeId({1, 1})) - p.at(NodeId::root())).squaredNorm();
  }
  CHECK(sum2 / (4.0 * draws) == doctest::Approx(0.49).epsilon(0.05));
}

TEST_CASE("mean of many root children") {
  const auto t = build_tree_shape({10000}, hyper(3));
  const auto p = sample_node_params(t, 9);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (const auto& c : t.root().children) mean += p.at(c.id) / 10000.0;
  const Eigen::VectorXd root = p.at(NodeId::root());
  // children scatter around their parent with unit variance per coordinate
  for (int d = 0; d < 3; ++d) CHECK(std::abs(mean(d) - root(d)) <= 3.0 / std::sqrt(10000.0));
}

TEST_CASE("fixed stick weights set leaf frequencies") {
  const auto t = build_tree_shape({2}, hyper(1));
  const EdgeWeights v{{EdgeId(NodeId({1, 1})), 0.7}, {EdgeId(NodeId({1, 2})), 1.0}};
  CHECK(path_mass(v, NodeId({1, 1})) == 0.7);
  Rng rng = make_rng(12);
  const auto paths = sample_paths(t, v, 100000, rng);
  const double first = std::count(paths.begin(), paths.end(), NodeId({1, 1})) / 1e5;
  CHECK(std::abs(first - 0.7) <= 0.005);
}

TEST_CASE("single leaf") {
  const auto t = build_tree_shape({1}, hyper(2));
  const auto params = sample_node_params(t, 1);
  const auto s = sample_sequence(t, params, 1.0, 30, 0.5, 2);
  for (const auto& p : s.paths) CHECK(p == NodeId({1, 1}));
}

TEST_CASE("zero emission noise reproduces leaf parameters") {
  const auto t = build_tree_shape({3}, hyper(2));
  const auto params = sample_node_params(t, 1);
  const auto s = sample_sequence(t, params, 1.0, 50, 0.0, 3);
  for (int n = 0; n < 50; ++n) CHECK(s.z.col(n) == params.at(s.paths[static_cast<std::size_t>(n)]));
}

TEST_CASE("leaf frequencies follow the expected stick weights") {
  // [2] tree: P(first leaf) = E v = 1 / (1 + gamma)
  const double gamma = 2.0;
  const auto t = build_tree_shape({2}, hyper(1));
  const auto params = sample_node_params(t, 1);
  int first = 0;
  const int seqs = 20000;
  for (int m = 0; m < seqs; ++m) {
    const auto s = sample_sequence(t, params, gamma, 1, 1.0, static_cast<std::uint64_t>(m));
    first += s.paths[0] == NodeId({1, 1});
  }
  const double expect = 1.0 / (1.0 + gamma);
  const double se = std::sqrt(expect * (1 - expect) / seqs);
  CHECK(std::abs(first / double(seqs) - expect) < 4.0 * se);
}

TEST_CASE("emission covariance") {
  const auto t = build_tree_shape({1}, hyper(3));
  const auto params = sample_node_params(t, 1);
  const double sd = 0.4;
  const auto s = sample_sequence(t, params, 1.0, 10000, sd, 7);
  const Eigen::VectorXd mean = s.z.rowwise().mean();
  const Eigen::MatrixXd c = s.z.colwise() - mean;
  const Eigen::MatrixXd cov = c * c.transpose() / 9999.0;
  for (int i = 0; i < 3; ++i) {
    CHECK(cov(i, i) == doctest::Approx(sd * sd).epsilon(0.1));
    for (int j = 0; j < i; ++j) CHECK(std::abs(cov(i, j)) < 0.1 * sd * sd);
  }
}

TEST_CASE("synth corpus") {
  SynthConfig cfg;
  cfg.n_seqs = 40;
  const auto [corpus, truth] = synth_corpus(cfg);
  CHECK(truth.tree.leaf_count() == 6);
  std::set<int> seen;
  for (const auto& seq : corpus.labels) {
    for (const auto& l : seq) seen.insert(*l);
  }
  CHECK(seen.size() <= 6);
  CHECK(*seen.rbegin() < 6);
  CHECK(corpus.feature_dim() == 64);
  CHECK(separation_ratio(truth, cfg) >= 10.0);

  const auto again = synth_corpus(cfg);
  CHECK(again.first == corpus);
}

TEST_CASE("nearest lifted centroid recovers the labels") {
  const SynthConfig cfg;
  const auto [corpus, truth] = synth_corpus(cfg);
  const auto leaves = enumerate_paths(truth.tree);
  Eigen::MatrixXd centers(cfg.feature_dim, static_cast<Eigen::Index>(leaves.size()));
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    centers.col(static_cast<Eigen::Index>(p)) = truth.lift * truth.tree.at(leaves[p]).mu;
  }
  std::size_t hits = 0, total = 0;
  for (std::size_t m = 0; m < corpus.sequences.size(); ++m) {
    for (Eigen::Index n = 0; n < corpus.sequences[m].cols(); ++n) {
      Eigen::Index best;
      (centers.colwise() - corpus.sequences[m].col(n)).colwise().squaredNorm().minCoeff(&best);
      hits += corpus.labels[m][static_cast<std::size_t>(n)] == static_cast<int>(best);
      ++total;
    }
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("noise-free identity lift") {
  SynthConfig cfg;
  cfg.branching = {1};
  cfg.noise = 0.0;
  cfg.sigma_d = 0.0;
  cfg.lift = Lift::identity;
  cfg.feature_dim = cfg.latent_dim;
  cfg.n_seqs = 3;
  const auto [corpus, truth] = synth_corpus(cfg);
  const Eigen::VectorXd alpha = truth.tree.at(NodeId({1, 1})).mu;
  for (const auto& x : corpus.sequences) {
    for (Eigen::Index n = 0; n < x.cols(); ++n) CHECK(x.col(n) == alpha);
  }
}

TEST_CASE("synth input errors") {
  SynthConfig cfg;
  cfg.branching = {};
  CHECK_THROWS_AS(synth_corpus(cfg), InputError);
  cfg = {};
  cfg.feature_dim = 4;
  CHECK_THROWS_AS(synth_corpus(cfg), InputError);
}

}  // TEST_SUITE
