#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hvae/corpus.hpp"
#include "hvae/eval.hpp"
#include "hvae/exec.hpp"
#include "hvae/trainer.hpp"

namespace hvae {

struct KMeansResult {
  Eigen::MatrixXd centers;  // F x k
  Assignments assignment;
  int iterations = 0;
};

/// Lloyd's algorithm on the element columns of `data`, initialized with k
/// distinct elements drawn uniformly (Forgy). An empty cluster keeps its
/// previous center.
KMeansResult kmeans(const std::vector<Eigen::MatrixXd>& data, int k, std::uint64_t seed,
                    int max_iter = 100, Exec exec = Exec::serial);

/// Fits k-means on `train`, labels clusters by majority vote and scores the
/// nearest-center predictions on `test`.
EvalReport kmeans_eval(const Corpus& train, const Corpus& test, int k, std::uint64_t seed,
                       Exec exec = Exec::serial);

/// Same autoencoder and optimizer with a N(0, I) latent prior.
TrainConfig standard_normal_variant(TrainConfig cfg);

/// Same autoencoder with a fixed flat mixture of `components` Gaussian
/// leaves under the root and no structure adaptation.
TrainConfig gmm_variant(TrainConfig cfg, int components);

}  // namespace hvae
