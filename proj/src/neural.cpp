#include "hvae/neural.hpp"

#include <cmath>

#include "hvae/errors.hpp"
#include "hvae/variational.hpp"

namespace hvae {

namespace {

Affine zero_affine(int out, int in) {
  return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

Affine random_affine(int out, int in, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  Affine a = zero_affine(out, in);
  for (Eigen::Index j = 0; j < a.w.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.w.rows(); ++i) a.w(i, j) = normal(rng);
  }
  return a;
}

template <typename View, typename Self>
std::array<View, AutoencoderParams::kTensorCount> tensor_views(Self& p) {
  return {{{"enc_mean.w", p.enc_mean.w.data(), p.enc_mean.w.rows(), p.enc_mean.w.cols()},
           {"enc_mean.b", p.enc_mean.b.data(), p.enc_mean.b.rows(), 1},
           {"enc_stdev.w", p.enc_stdev.w.data(), p.enc_stdev.w.rows(), p.enc_stdev.w.cols()},
           {"enc_stdev.b", p.enc_stdev.b.data(), p.enc_stdev.b.rows(), 1},
           {"dec.w", p.dec.w.data(), p.dec.w.rows(), p.dec.w.cols()},
           {"dec.b", p.dec.b.data(), p.dec.b.rows(), 1}}};
}

}  // namespace

AutoencoderParams AutoencoderParams::zeros(int feature_dim, int latent_dim) {
  if (feature_dim < 1 || latent_dim < 1) throw InputError("autoencoder dims must be positive");
  return {zero_affine(latent_dim, feature_dim), zero_affine(latent_dim, feature_dim),
          zero_affine(feature_dim, latent_dim)};
}

AutoencoderParams AutoencoderParams::init(int feature_dim, int latent_dim, std::uint64_t seed,
                                          double log_stdev_bias) {
  if (feature_dim < 1 || latent_dim < 1) throw InputError("autoencoder dims must be positive");
  Rng rng = make_rng(seed);
  AutoencoderParams p{random_affine(latent_dim, feature_dim, rng),
                      random_affine(latent_dim, feature_dim, rng),
                      random_affine(feature_dim, latent_dim, rng)};
  p.enc_stdev.w *= 0.1;
  p.enc_stdev.b.setConstant(log_stdev_bias);
  return p;
}

std::array<TensorView, AutoencoderParams::kTensorCount> AutoencoderParams::tensors() {
  return tensor_views<TensorView>(*this);
}

std::array<ConstTensorView, AutoencoderParams::kTensorCount> AutoencoderParams::tensors() const {
  return tensor_views<ConstTensorView>(*this);
}

bool AutoencoderParams::all_finite() const {
  for (const auto& t : tensors()) {
    if (!t.flat().allFinite()) return false;
  }
  return true;
}

double AutoencoderParams::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors()) s += t.flat().squaredNorm();
  return s;
}

bool AutoencoderParams::operator==(const AutoencoderParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols || a[i].flat() != b[i].flat()) {
      return false;
    }
  }
  return true;
}

Encoded encode(const AutoencoderParams& params, const Eigen::VectorXd& x) {
  if (x.size() != params.feature_dim()) throw InputError("input has wrong feature dimension");
  if (!x.allFinite()) throw InputError("input contains non-finite values");
  return {params.enc_mean.apply(x), params.enc_stdev.apply(x).array().exp().matrix()};
}

Eigen::VectorXd standard_normal_vector(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

Eigen::VectorXd sample_latent(const Eigen::VectorXd& z_mean, const Eigen::VectorXd& z_stdev,
                              std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return z_mean + z_stdev.cwiseProduct(standard_normal_vector(static_cast<int>(z_mean.size()), rng));
}

LossTerms loss(const AutoencoderParams& params, const Eigen::VectorXd& x,
               const Eigen::MatrixXd& prior_means, const Eigen::VectorXd& prior_weights,
               double prior_sigma, const Eigen::VectorXd& eps, LossCache* cache) {
  if (prior_means.cols() != prior_weights.size()) {
    throw InputError("prior weights do not match the number of prior components");
  }
  const Eigen::VectorXd z_mean = params.enc_mean.apply(x);
  const Eigen::VectorXd log_stdev = params.enc_stdev.apply(x);
  const Eigen::VectorXd z_stdev = log_stdev.array().exp().matrix();
  const Eigen::VectorXd z = z_mean + z_stdev.cwiseProduct(eps);
  const Eigen::VectorXd residual = params.dec.apply(z) - x;

  const double s2 = prior_sigma * prior_sigma;
  double weight_sum = 0.0;
  double mean_term = 0.0;
  Eigen::VectorXd pull = Eigen::VectorXd::Zero(z_mean.size());
  for (Eigen::Index p = 0; p < prior_weights.size(); ++p) {
    const double w = prior_weights(p);
    if (w == 0.0) continue;
    const Eigen::VectorXd diff = z_mean - prior_means.col(p);
    weight_sum += w;
    mean_term += w * diff.squaredNorm();
    pull += w * diff;
  }
  const double per_component =
      (std::log(prior_sigma) - log_stdev.array() + z_stdev.array().square() / (2.0 * s2) - 0.5).sum();

  LossTerms out;
  out.recon = 0.5 * residual.squaredNorm();
  out.kl = weight_sum * per_component + mean_term / (2.0 * s2);

  if (cache) {
    cache->x = x;
    cache->z_stdev = z_stdev;
    cache->eps = eps;
    cache->z = z;
    cache->residual = residual;
    cache->kl_pull = std::move(pull);
    cache->weight_sum = weight_sum;
    cache->prior_sigma = prior_sigma;
  }
  return out;
}

namespace {

Eigen::MatrixXd leaf_means(const TruncatedTree& tree) {
  const auto leaves = enumerate_paths(tree);
  Eigen::MatrixXd means(tree.dim(), static_cast<Eigen::Index>(leaves.size()));
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    means.col(static_cast<Eigen::Index>(p)) = tree.at(leaves[p]).mu;
  }
  return means;
}

}  // namespace

LossTerms loss(const AutoencoderParams& params, const Eigen::VectorXd& x,
               const TruncatedTree& tree, const Eigen::VectorXd& phi, std::uint64_t seed,
               LossCache* cache) {
  Rng rng = make_rng(seed);
  const Eigen::VectorXd eps = standard_normal_vector(params.latent_dim(), rng);
  return loss(params, x, leaf_means(tree), phi, tree.hyper().sigma_d, eps, cache);
}

void accumulate_backward(const AutoencoderParams& params, const LossCache& c, double scale,
                         AutoencoderParams& g) {
  const double s2 = c.prior_sigma * c.prior_sigma;
  const Eigen::VectorXd& r = c.residual;
  g.dec.w.noalias() += scale * r * c.z.transpose();
  g.dec.b += scale * r;
  const Eigen::VectorXd dz = params.dec.w.transpose() * r;

  const Eigen::VectorXd d_mean = dz + c.kl_pull / s2;
  // d/d log_stdev of the sampled path and of the KL stdev terms
  const Eigen::VectorXd d_log_stdev =
      (dz.array() * c.eps.array() * c.z_stdev.array() +
       c.weight_sum * (c.z_stdev.array().square() / s2 - 1.0))
          .matrix();

  g.enc_mean.w.noalias() += scale * d_mean * c.x.transpose();
  g.enc_mean.b += scale * d_mean;
  g.enc_stdev.w.noalias() += scale * d_log_stdev * c.x.transpose();
  g.enc_stdev.b += scale * d_log_stdev;
}

AutoencoderParams backward(const AutoencoderParams& params, const LossCache& cache) {
  AutoencoderParams g = AutoencoderParams::zeros(params.feature_dim(), params.latent_dim());
  accumulate_backward(params, cache, 1.0, g);
  return g;
}

RmspropState RmspropState::for_params(const AutoencoderParams& params) {
  RmspropState s;
  s.mean_square = AutoencoderParams::zeros(params.feature_dim(), params.latent_dim());
  return s;
}

double RmspropState::learning_rate() const {
  return initial_rate * std::pow(decay_rate, static_cast<double>(step) / decay_steps);
}

bool RmspropState::operator==(const RmspropState& o) const {
  return mean_square == o.mean_square && initial_rate == o.initial_rate &&
         decay_rate == o.decay_rate && decay_steps == o.decay_steps && rho == o.rho &&
         epsilon == o.epsilon && step == o.step;
}

void step(AutoencoderParams& params, const AutoencoderParams& grads, RmspropState& opt) {
  const double lr = opt.learning_rate();
  auto w = params.tensors();
  const auto g = grads.tensors();
  auto a = opt.mean_square.tensors();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i].size() != g[i].size() || w[i].size() != a[i].size()) {
      throw InputError("gradient shape does not match parameter " + std::string(w[i].name));
    }
    auto acc = a[i].flat();
    const auto grad = g[i].flat();
    acc = opt.rho * acc + (1.0 - opt.rho) * grad.cwiseAbs2();
    w[i].flat().array() -= lr * grad.array() / (acc.array() + opt.epsilon).sqrt();
  }
  ++opt.step;
}

Eigen::VectorXd element_noise(int latent_dim, std::uint64_t seed, std::uint64_t round, int m,
                              int n) {
  Rng rng = make_rng(seed, {round, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(n)});
  return standard_normal_vector(latent_dim, rng);
}

LossTerms element_loss(const AutoencoderParams& params, const BatchSpec& batch, ElementRef e,
                       LossCache& cache) {
  const auto m = static_cast<std::size_t>(e.m);
  const Eigen::VectorXd x = batch.corpus.sequences[m].col(e.n);
  const Eigen::VectorXd eps =
      element_noise(params.latent_dim(), batch.seed, batch.round, e.m, e.n);
  if (batch.assignments.empty()) {
    const auto P = batch.prior_means.cols();
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(P, 1.0 / static_cast<double>(P));
    return loss(params, x, batch.prior_means, uniform, batch.prior_sigma, eps, &cache);
  }
  return loss(params, x, batch.prior_means, batch.assignments[m].phi.col(e.n), batch.prior_sigma,
              eps, &cache);
}

}  // namespace hvae
