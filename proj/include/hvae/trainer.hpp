#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hvae/corpus.hpp"
#include "hvae/exec.hpp"
#include "hvae/neural.hpp"
#include "hvae/structure.hpp"
#include "hvae/tree.hpp"
#include "hvae/variational.hpp"

namespace hvae {

enum class PriorKind {
  ncrp,             // tree prior, refit by VI every round
  standard_normal,  // N(0, I) latent prior; no VI, no adaptation
};

struct OptimizerConfig {
  double learning_rate = 0.01;
  double decay_rate = 0.98;
  double decay_steps = 1000.0;
  double rho = 0.9;
  double epsilon = 1e-8;
};

/// Every knob of a training run. VI observations are always the encoder
/// means z_mean, refreshed after each neural phase.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  int vi_sweeps_per_round = 1;
  int latent_dim = 8;
  double gamma_star = 1.0;
  double sigma_n = 1.0;
  double sigma_d = 1.0;
  std::vector<double> alpha_star;  // empty means the zero vector
  AdaptConfig adapt;
  std::uint64_t seed = 1;
  OptimizerConfig optimizer;
  std::vector<int> initial_branching{2};
  PriorKind prior = PriorKind::ncrp;
  Exec exec = Exec::serial;
  double init_log_stdev = 0.0;  // initial bias of the log-stdev head

  nlohmann::json to_json() const;
  /// Fields missing from `j` keep their value in `base`. Unknown keys are
  /// rejected.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
  /// Throws InputError on invalid values; returns warnings.
  std::vector<std::string> validate() const;
  Hyperparams hyperparams() const;
};

struct ModelState {
  TruncatedTree tree;
  AutoencoderParams autoencoder;
  RmspropState opt;
  std::vector<SequenceVarState> var;
  int round = 0;

  bool operator==(const ModelState& other) const;
};

struct RoundMetrics {
  int round = 0;
  double elbo = 0.0;
  double nn_loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  int n_paths = 0;
  int n_nodes = 0;
};

struct TrainResult {
  ModelState state;
  std::vector<RoundMetrics> trace;
  AdaptReport adapt_log;
};

/// Fresh model for `corpus`: initial tree with node means drawn around
/// alpha*, random autoencoder, uniform assignments.
ModelState init_model(const TrainConfig& cfg, const Corpus& corpus);

/// One pass of minibatch RMSProp over every element with the tree frozen.
/// Returns per-element mean loss terms. Throws NumericalError on a
/// non-finite loss.
LossTerms nn_phase(ModelState& state, const TrainConfig& cfg, const Corpus& corpus);

/// VI sweeps with the autoencoder frozen, observing z_mean of the current
/// encoder. Returns the ELBO after the last sweep.
double vi_phase(ModelState& state, const TrainConfig& cfg, const Corpus& corpus);

/// Neural phase, latent refresh, VI, then structure adaptation.
RoundMetrics run_round(ModelState& state, const TrainConfig& cfg, const Corpus& corpus,
                       AdaptReport* log = nullptr);

TrainResult train(const TrainConfig& cfg, const Corpus& corpus);

/// Runs `epochs` more rounds starting from `state`.
TrainResult continue_training(ModelState state, const TrainConfig& cfg, const Corpus& corpus,
                              int epochs);

/// Leaf means as columns in path order, or a single zero column for the
/// standard-normal prior.
Eigen::MatrixXd prior_means(const ModelState& state, const TrainConfig& cfg);

void write_metrics_csv(const std::vector<RoundMetrics>& trace, std::ostream& os);
void write_metrics_csv(const std::vector<RoundMetrics>& trace, const std::filesystem::path& path);

}  // namespace hvae
