#pragma once

// Data-parallel inner loops. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp with the same
// contract; the dispatchers below pick one by Exec.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hvae/corpus.hpp"
#include "hvae/exec.hpp"
#include "hvae/neural.hpp"
#include "hvae/tree.hpp"
#include "hvae/variational.hpp"

namespace hvae::kernels {

/// Assignment mass and assignment-weighted code sums per path.
struct LeafStats {
  Eigen::VectorXd mass;         // P
  Eigen::MatrixXd weighted_sum; // D x P
};

namespace serial {

void fit_sequences(const TreeLayout& layout, const NodeParams& nodes, const Hyperparams& hyper,
                   std::span<SequenceVarState> states, const LatentTable& latents);
LeafStats leaf_stats(const TreeLayout& layout, std::span<const SequenceVarState> states,
                     const LatentTable& latents, int dim);
BatchResult batch_gradient(const AutoencoderParams& params, const BatchSpec& batch);
LatentTable encode_corpus(const AutoencoderParams& params, const Corpus& corpus);
/// Index of the nearest column of `centers` for every element code.
std::vector<std::vector<int>> nearest_columns(const std::vector<Eigen::MatrixXd>& codes,
                                              const Eigen::MatrixXd& centers);

}  // namespace serial

namespace omp {

void fit_sequences(const TreeLayout& layout, const NodeParams& nodes, const Hyperparams& hyper,
                   std::span<SequenceVarState> states, const LatentTable& latents);
LeafStats leaf_stats(const TreeLayout& layout, std::span<const SequenceVarState> states,
                     const LatentTable& latents, int dim);
BatchResult batch_gradient(const AutoencoderParams& params, const BatchSpec& batch);
LatentTable encode_corpus(const AutoencoderParams& params, const Corpus& corpus);
std::vector<std::vector<int>> nearest_columns(const std::vector<Eigen::MatrixXd>& codes,
                                              const Eigen::MatrixXd& centers);

}  // namespace omp

inline void fit_sequences(Exec exec, const TreeLayout& layout, const NodeParams& nodes,
                          const Hyperparams& hyper, std::span<SequenceVarState> states,
                          const LatentTable& latents) {
  exec == Exec::serial ? serial::fit_sequences(layout, nodes, hyper, states, latents)
                       : omp::fit_sequences(layout, nodes, hyper, states, latents);
}

inline LeafStats leaf_stats(Exec exec, const TreeLayout& layout,
                            std::span<const SequenceVarState> states, const LatentTable& latents,
                            int dim) {
  return exec == Exec::serial ? serial::leaf_stats(layout, states, latents, dim)
                              : omp::leaf_stats(layout, states, latents, dim);
}

inline BatchResult batch_gradient(Exec exec, const AutoencoderParams& params,
                                  const BatchSpec& batch) {
  return exec == Exec::serial ? serial::batch_gradient(params, batch)
                              : omp::batch_gradient(params, batch);
}

inline LatentTable encode_corpus(Exec exec, const AutoencoderParams& params, const Corpus& corpus) {
  return exec == Exec::serial ? serial::encode_corpus(params, corpus)
                              : omp::encode_corpus(params, corpus);
}

inline std::vector<std::vector<int>> nearest_columns(Exec exec,
                                                     const std::vector<Eigen::MatrixXd>& codes,
                                                     const Eigen::MatrixXd& centers) {
  return exec == Exec::serial ? serial::nearest_columns(codes, centers)
                              : omp::nearest_columns(codes, centers);
}

}  // namespace hvae::kernels
