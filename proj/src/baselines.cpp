#include "hvae/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "hvae/errors.hpp"
#include "hvae/kernels.hpp"
#include "hvae/rng.hpp"

namespace hvae {

KMeansResult kmeans(const std::vector<Eigen::MatrixXd>& data, int k, std::uint64_t seed,
                    int max_iter, Exec exec) {
  std::vector<ElementRef> all;
  for (std::size_t m = 0; m < data.size(); ++m) {
    for (Eigen::Index n = 0; n < data[m].cols(); ++n) {
      all.push_back({static_cast<int>(m), static_cast<int>(n)});
    }
  }
  if (k < 1 || static_cast<std::size_t>(k) > all.size()) {
    throw InputError("k-means needs 1 <= k <= number of elements");
  }
  const auto F = data.front().rows();
  Rng rng = make_rng(seed, {0xc3});
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  KMeansResult r;
  r.centers.resize(F, k);
  for (int c = 0; c < k; ++c) {
    const auto& e = all[order[static_cast<std::size_t>(c)]];
    r.centers.col(c) = data[static_cast<std::size_t>(e.m)].col(e.n);
  }
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    auto next = kernels::nearest_columns(exec, data, r.centers);
    const bool stable = next == r.assignment;
    r.assignment = std::move(next);
    if (stable) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(F, k);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (std::size_t m = 0; m < data.size(); ++m) {
      for (Eigen::Index n = 0; n < data[m].cols(); ++n) {
        const int c = r.assignment[m][static_cast<std::size_t>(n)];
        sum.col(c) += data[m].col(n);
        count(c) += 1.0;
      }
    }
    for (int c = 0; c < k; ++c) {
      if (count(c) > 0.0) r.centers.col(c) = sum.col(c) / count(c);
    }
  }
  r.iterations = std::min(r.iterations, max_iter);
  return r;
}

EvalReport kmeans_eval(const Corpus& train, const Corpus& test, int k, std::uint64_t seed,
                       Exec exec) {
  if (!train.has_any_label()) throw MissingLabelsError("training corpus carries no labels");
  const KMeansResult fit = kmeans(train.sequences, k, seed, 100, exec);
  const auto majority = cluster_majority(fit.assignment, train);
  const auto assigned = kernels::nearest_columns(exec, test.sequences, fit.centers);
  std::vector<std::optional<int>> predicted;
  for (const auto& seq : assigned) {
    for (int c : seq) {
      auto it = majority.find(c);
      predicted.push_back(it == majority.end() ? std::nullopt : std::optional<int>(it->second));
    }
  }
  EvalReport r = score_predictions(predicted, flat_labels(test));
  r.path_histogram = path_histogram(assigned, k);
  return r;
}

TrainConfig standard_normal_variant(TrainConfig cfg) {
  cfg.prior = PriorKind::standard_normal;
  cfg.adapt.enabled = false;
  return cfg;
}

TrainConfig gmm_variant(TrainConfig cfg, int components) {
  if (components < 1) throw InputError("mixture needs at least one component");
  cfg.prior = PriorKind::ncrp;
  cfg.initial_branching = {components};
  cfg.adapt.enabled = false;
  return cfg;
}

}  // namespace hvae
