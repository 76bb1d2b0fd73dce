#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "hvae/corpus.hpp"
#include "hvae/rng.hpp"
#include "hvae/tree.hpp"

namespace hvae {

struct SequenceVarState;

struct Affine {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return w * x + b; }
};

struct TensorView {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<Eigen::VectorXd> flat() const { return {data, size()}; }
};

struct ConstTensorView {
  std::string_view name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<const Eigen::VectorXd> flat() const { return {data, size()}; }
};

/// Single-layer encoder heads (mean, log-stdev) and a single-layer decoder.
/// Also used, same-shaped, for gradients and RMSProp accumulators.
struct AutoencoderParams {
  Affine enc_mean;   // F -> D
  Affine enc_stdev;  // F -> D, log standard deviations
  Affine dec;        // D -> F

  static constexpr int kTensorCount = 6;

  static AutoencoderParams zeros(int feature_dim, int latent_dim);
  /// Weights ~ N(0, 1/fan_in), zero biases except the log-stdev head, whose
  /// bias is `log_stdev_bias`.
  static AutoencoderParams init(int feature_dim, int latent_dim, std::uint64_t seed,
                                double log_stdev_bias = 0.0);

  int feature_dim() const { return static_cast<int>(enc_mean.w.cols()); }
  int latent_dim() const { return static_cast<int>(enc_mean.w.rows()); }

  std::array<TensorView, kTensorCount> tensors();
  std::array<ConstTensorView, kTensorCount> tensors() const;

  bool all_finite() const;
  double squared_norm() const;
  bool operator==(const AutoencoderParams& other) const;
};

struct Encoded {
  Eigen::VectorXd z_mean;
  Eigen::VectorXd z_stdev;
};

/// z_mean = affine(x), z_stdev = exp(affine(x)). Throws InputError on
/// non-finite input.
Encoded encode(const AutoencoderParams& params, const Eigen::VectorXd& x);

Eigen::VectorXd standard_normal_vector(int dim, Rng& rng);

/// z = z_mean + z_stdev * eps, eps ~ N(0, I) drawn from `seed`.
Eigen::VectorXd sample_latent(const Eigen::VectorXd& z_mean, const Eigen::VectorXd& z_stdev,
                              std::uint64_t seed);

struct LossTerms {
  double recon = 0.0;
  double kl = 0.0;

  double total() const { return recon + kl; }
  LossTerms& operator+=(const LossTerms& o) {
    recon += o.recon;
    kl += o.kl;
    return *this;
  }
};

/// Intermediates of one forward pass, consumed by backward().
struct LossCache {
  Eigen::VectorXd x;
  Eigen::VectorXd z_stdev;
  Eigen::VectorXd eps;
  Eigen::VectorXd z;
  Eigen::VectorXd residual;    // dec(z) - x
  Eigen::VectorXd kl_pull;     // sum_p w_p (z_mean - mu_p)
  double weight_sum = 0.0;
  double prior_sigma = 1.0;
};

/// Negative single-sample ELBO for one input:
///   recon = 1/2 ||x - dec(z)||^2
///   kl    = sum_p w_p KL(N(z_mean, diag z_stdev^2) || N(mu_p, sigma^2 I))
/// with prior component means in the columns of `prior_means`.
LossTerms loss(const AutoencoderParams& params, const Eigen::VectorXd& x,
               const Eigen::MatrixXd& prior_means, const Eigen::VectorXd& prior_weights,
               double prior_sigma, const Eigen::VectorXd& eps, LossCache* cache = nullptr);

/// Same, with the leaves of `tree` as components (sigma = sigma_d) and
/// eps drawn from `seed`.
LossTerms loss(const AutoencoderParams& params, const Eigen::VectorXd& x,
               const TruncatedTree& tree, const Eigen::VectorXd& phi, std::uint64_t seed,
               LossCache* cache = nullptr);

/// Exact gradient of loss() at the cached point.
AutoencoderParams backward(const AutoencoderParams& params, const LossCache& cache);

/// Adds scale * gradient into `grad`.
void accumulate_backward(const AutoencoderParams& params, const LossCache& cache, double scale,
                         AutoencoderParams& grad);

struct RmspropState {
  AutoencoderParams mean_square;
  double initial_rate = 0.01;
  double decay_rate = 0.98;
  double decay_steps = 1000.0;
  double rho = 0.9;
  double epsilon = 1e-8;
  std::int64_t step = 0;

  static RmspropState for_params(const AutoencoderParams& params);
  /// initial_rate * decay_rate^(step / decay_steps)
  double learning_rate() const;
  bool operator==(const RmspropState& other) const;
};

/// a <- rho a + (1 - rho) g^2; w <- w - lr * g / sqrt(a + eps); step += 1.
void step(AutoencoderParams& params, const AutoencoderParams& grads, RmspropState& opt);

/// Position of an element inside a corpus.
struct ElementRef {
  int m = 0;
  int n = 0;
};

/// Prior and noise inputs for a minibatch. Element (m, n) uses the column
/// `assignments[m].phi.col(n)` as mixture weights, or uniform weights when
/// `assignments` is empty. Its noise is drawn from make_rng(seed, {round, m, n}).
struct BatchSpec {
  const Corpus& corpus;
  std::span<const ElementRef> elements;
  const Eigen::MatrixXd& prior_means;
  std::span<const SequenceVarState> assignments;
  double prior_sigma;
  std::uint64_t seed;
  std::uint64_t round;
};

struct BatchResult {
  LossTerms sum;
  AutoencoderParams grad;  // summed over the batch
  std::size_t count = 0;
};

/// Noise vector used for element (m, n) in a given round.
Eigen::VectorXd element_noise(int latent_dim, std::uint64_t seed, std::uint64_t round, int m,
                              int n);

/// Loss and gradient contribution of a single element of a batch.
LossTerms element_loss(const AutoencoderParams& params, const BatchSpec& batch, ElementRef e,
                       LossCache& cache);

}  // namespace hvae
