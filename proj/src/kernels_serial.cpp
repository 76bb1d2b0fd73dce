#include <limits>

#include "hvae/errors.hpp"
#include "hvae/kernels.hpp"

namespace hvae::kernels::serial {

void fit_sequences(const TreeLayout& layout, const NodeParams& nodes, const Hyperparams& hyper,
                   std::span<SequenceVarState> states, const LatentTable& latents) {
  for (std::size_t m = 0; m < states.size(); ++m) {
    update_sequence(states[m], layout, nodes, hyper, latents.z[m]);
  }
}

LeafStats leaf_stats(const TreeLayout& layout, std::span<const SequenceVarState> states,
                     const LatentTable& latents, int dim) {
  LeafStats out{Eigen::VectorXd::Zero(layout.path_count()),
                Eigen::MatrixXd::Zero(dim, layout.path_count())};
  for (std::size_t m = 0; m < states.size(); ++m) {
    out.mass += states[m].phi.rowwise().sum();
    out.weighted_sum.noalias() += latents.z[m] * states[m].phi.transpose();
  }
  return out;
}

BatchResult batch_gradient(const AutoencoderParams& params, const BatchSpec& batch) {
  BatchResult out;
  out.grad = AutoencoderParams::zeros(params.feature_dim(), params.latent_dim());
  LossCache cache;
  for (const auto& e : batch.elements) {
    out.sum += element_loss(params, batch, e, cache);
    accumulate_backward(params, cache, 1.0, out.grad);
    ++out.count;
  }
  return out;
}

LatentTable encode_corpus(const AutoencoderParams& params, const Corpus& corpus) {
  LatentTable t;
  for (const auto& seq : corpus.sequences) {
    if (seq.rows() != params.feature_dim()) throw InputError("corpus feature dim mismatch");
    Eigen::MatrixXd mean = (params.enc_mean.w * seq).colwise() + params.enc_mean.b;
    Eigen::MatrixXd stdev =
        ((params.enc_stdev.w * seq).colwise() + params.enc_stdev.b).array().exp().matrix();
    t.z.push_back(mean);
    t.z_mean.push_back(std::move(mean));
    t.z_stdev.push_back(std::move(stdev));
  }
  return t;
}

std::vector<std::vector<int>> nearest_columns(const std::vector<Eigen::MatrixXd>& codes,
                                              const Eigen::MatrixXd& centers) {
  std::vector<std::vector<int>> out(codes.size());
  for (std::size_t m = 0; m < codes.size(); ++m) {
    out[m].resize(static_cast<std::size_t>(codes[m].cols()));
    for (Eigen::Index n = 0; n < codes[m].cols(); ++n) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Eigen::Index p = 0; p < centers.cols(); ++p) {
        const double d = (codes[m].col(n) - centers.col(p)).squaredNorm();
        if (d < best) {  // strict: ties keep the earlier column
          best = d;
          arg = static_cast<int>(p);
        }
      }
      out[m][static_cast<std::size_t>(n)] = arg;
    }
  }
  return out;
}

}  // namespace hvae::kernels::serial
