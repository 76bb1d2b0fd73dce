#include <exception>
#include <limits>

#include <omp.h>

#include "hvae/errors.hpp"
#include "hvae/kernels.hpp"

namespace hvae::kernels::omp {

namespace {

// Holds the first exception raised inside a parallel region so it can be
// rethrown on the calling thread.
class ErrorSlot {
 public:
  template <typename F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
#pragma omp critical(hvae_error_slot)
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

}  // namespace

void fit_sequences(const TreeLayout& layout, const NodeParams& nodes, const Hyperparams& hyper,
                   std::span<SequenceVarState> states, const LatentTable& latents) {
  const auto M = static_cast<std::int64_t>(states.size());
  ErrorSlot errors;
  // Each sequence owns its state; the node parameters are a read-only snapshot.
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t m = 0; m < M; ++m) {
    const auto i = static_cast<std::size_t>(m);
    errors.run([&] { update_sequence(states[i], layout, nodes, hyper, latents.z[i]); });
  }
  errors.rethrow();
}

LeafStats leaf_stats(const TreeLayout& layout, std::span<const SequenceVarState> states,
                     const LatentTable& latents, int dim) {
  const int P = layout.path_count();
  const int T = omp_get_max_threads();
  std::vector<LeafStats> partial(static_cast<std::size_t>(T),
                                 LeafStats{Eigen::VectorXd::Zero(P), Eigen::MatrixXd::Zero(dim, P)});
  const auto M = static_cast<std::int64_t>(states.size());
#pragma omp parallel
  {
    auto& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (std::int64_t m = 0; m < M; ++m) {
      const auto i = static_cast<std::size_t>(m);
      local.mass += states[i].phi.rowwise().sum();
      local.weighted_sum.noalias() += latents.z[i] * states[i].phi.transpose();
    }
  }
  LeafStats out = std::move(partial.front());
  for (std::size_t t = 1; t < partial.size(); ++t) {
    out.mass += partial[t].mass;
    out.weighted_sum += partial[t].weighted_sum;
  }
  return out;
}

BatchResult batch_gradient(const AutoencoderParams& params, const BatchSpec& batch) {
  const int T = omp_get_max_threads();
  std::vector<BatchResult> partial(static_cast<std::size_t>(T));
  for (auto& p : partial) p.grad = AutoencoderParams::zeros(params.feature_dim(), params.latent_dim());
  const auto B = static_cast<std::int64_t>(batch.elements.size());
  ErrorSlot errors;
#pragma omp parallel
  {
    auto& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
    LossCache cache;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < B; ++i) {
      errors.run([&] {
        local.sum += element_loss(params, batch, batch.elements[static_cast<std::size_t>(i)], cache);
        accumulate_backward(params, cache, 1.0, local.grad);
        ++local.count;
      });
    }
  }
  errors.rethrow();
  BatchResult out = std::move(partial.front());
  for (std::size_t t = 1; t < partial.size(); ++t) {
    out.sum += partial[t].sum;
    out.count += partial[t].count;
    auto dst = out.grad.tensors();
    const auto src = partial[t].grad.tensors();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k].flat() += src[k].flat();
  }
  return out;
}

LatentTable encode_corpus(const AutoencoderParams& params, const Corpus& corpus) {
  const auto M = corpus.sequences.size();
  LatentTable t;
  t.z.resize(M);
  t.z_mean.resize(M);
  t.z_stdev.resize(M);
  for (const auto& seq : corpus.sequences) {
    if (seq.rows() != params.feature_dim()) throw InputError("corpus feature dim mismatch");
  }
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t m = 0; m < static_cast<std::int64_t>(M); ++m) {
    const auto i = static_cast<std::size_t>(m);
    const auto& seq = corpus.sequences[i];
    t.z_mean[i] = (params.enc_mean.w * seq).colwise() + params.enc_mean.b;
    t.z_stdev[i] =
        ((params.enc_stdev.w * seq).colwise() + params.enc_stdev.b).array().exp().matrix();
    t.z[i] = t.z_mean[i];
  }
  return t;
}

std::vector<std::vector<int>> nearest_columns(const std::vector<Eigen::MatrixXd>& codes,
                                              const Eigen::MatrixXd& centers) {
  std::vector<std::vector<int>> out(codes.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t mm = 0; mm < static_cast<std::int64_t>(codes.size()); ++mm) {
    const auto m = static_cast<std::size_t>(mm);
    out[m].resize(static_cast<std::size_t>(codes[m].cols()));
    for (Eigen::Index n = 0; n < codes[m].cols(); ++n) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Eigen::Index p = 0; p < centers.cols(); ++p) {
        const double d = (codes[m].col(n) - centers.col(p)).squaredNorm();
        if (d < best) {
          best = d;
          arg = static_cast<int>(p);
        }
      }
      out[m][static_cast<std::size_t>(n)] = arg;
    }
  }
  return out;
}

}  // namespace hvae::kernels::omp
