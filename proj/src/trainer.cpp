#include "hvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "hvae/errors.hpp"
#include "hvae/kernels.hpp"
#include "hvae/rng.hpp"

namespace hvae {

namespace {

std::string prior_name(PriorKind p) { return p == PriorKind::ncrp ? "ncrp" : "standard_normal"; }

PriorKind parse_prior(const std::string& s) {
  if (s == "ncrp") return PriorKind::ncrp;
  if (s == "standard_normal") return PriorKind::standard_normal;
  throw InputError("unknown prior '" + s + "'");
}

std::string exec_name(Exec e) { return e == Exec::serial ? "serial" : "parallel"; }

Exec parse_exec(const std::string& s) {
  if (s == "serial") return Exec::serial;
  if (s == "parallel") return Exec::parallel;
  throw InputError("unknown exec mode '" + s + "'");
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw InputError("unknown config key '" + where + k + "'");
  }
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  return {
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"vi_sweeps_per_round", vi_sweeps_per_round},
      {"latent_dim", latent_dim},
      {"gamma_star", gamma_star},
      {"sigma_n", sigma_n},
      {"sigma_d", sigma_d},
      {"alpha_star", alpha_star},
      {"adapt",
       {{"enabled", adapt.enabled},
        {"radius_threshold", adapt.radius_threshold},
        {"split_arity", adapt.split_arity},
        {"fraction_threshold", adapt.fraction_threshold},
        {"max_leaves", adapt.max_leaves}}},
      {"seed", seed},
      {"optimizer",
       {{"learning_rate", optimizer.learning_rate},
        {"decay_rate", optimizer.decay_rate},
        {"decay_steps", optimizer.decay_steps},
        {"rho", optimizer.rho},
        {"epsilon", optimizer.epsilon}}},
      {"initial_branching", initial_branching},
      {"prior", prior_name(prior)},
      {"exec", exec_name(exec)},
      {"init_log_stdev", init_log_stdev},
  };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  reject_unknown(j,
                 {"epochs", "batch_size", "vi_sweeps_per_round", "latent_dim", "gamma_star",
                  "sigma_n", "sigma_d", "alpha_star", "adapt", "seed", "optimizer",
                  "initial_branching", "prior", "exec", "init_log_stdev"},
                 "");
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "vi_sweeps_per_round", c.vi_sweeps_per_round);
  read_field(j, "latent_dim", c.latent_dim);
  read_field(j, "gamma_star", c.gamma_star);
  read_field(j, "sigma_n", c.sigma_n);
  read_field(j, "sigma_d", c.sigma_d);
  read_field(j, "alpha_star", c.alpha_star);
  read_field(j, "seed", c.seed);
  read_field(j, "initial_branching", c.initial_branching);
  read_field(j, "init_log_stdev", c.init_log_stdev);
  if (auto it = j.find("adapt"); it != j.end()) {
    reject_unknown(*it,
                   {"enabled", "radius_threshold", "split_arity", "fraction_threshold",
                    "max_leaves"},
                   "adapt.");
    read_field(*it, "enabled", c.adapt.enabled);
    read_field(*it, "radius_threshold", c.adapt.radius_threshold);
    read_field(*it, "split_arity", c.adapt.split_arity);
    read_field(*it, "fraction_threshold", c.adapt.fraction_threshold);
    read_field(*it, "max_leaves", c.adapt.max_leaves);
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    reject_unknown(*it, {"learning_rate", "decay_rate", "decay_steps", "rho", "epsilon"},
                   "optimizer.");
    read_field(*it, "learning_rate", c.optimizer.learning_rate);
    read_field(*it, "decay_rate", c.optimizer.decay_rate);
    read_field(*it, "decay_steps", c.optimizer.decay_steps);
    read_field(*it, "rho", c.optimizer.rho);
    read_field(*it, "epsilon", c.optimizer.epsilon);
  }
  if (auto it = j.find("prior"); it != j.end()) c.prior = parse_prior(it->get<std::string>());
  if (auto it = j.find("exec"); it != j.end()) c.exec = parse_exec(it->get<std::string>());
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

std::vector<std::string> TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InputError("invalid config: " + what);
  };
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(vi_sweeps_per_round >= 0, "vi_sweeps_per_round must be >= 0");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(gamma_star > 0.0, "gamma_star must be > 0");
  require(sigma_n > 0.0, "sigma_n must be > 0");
  require(sigma_d > 0.0, "sigma_d must be > 0");
  require(alpha_star.empty() || static_cast<int>(alpha_star.size()) == latent_dim,
          "alpha_star must have latent_dim entries");
  require(adapt.radius_threshold > 0.0, "adapt.radius_threshold must be > 0");
  require(adapt.split_arity >= 2, "adapt.split_arity must be >= 2");
  require(adapt.fraction_threshold > 0.0 && adapt.fraction_threshold < 1.0,
          "adapt.fraction_threshold must be in (0, 1)");
  require(adapt.max_leaves >= 1, "adapt.max_leaves must be >= 1");
  require(optimizer.learning_rate > 0.0 && optimizer.decay_rate > 0.0 &&
              optimizer.decay_steps > 0.0 && optimizer.rho >= 0.0 && optimizer.rho < 1.0 &&
              optimizer.epsilon > 0.0,
          "optimizer settings out of range");
  require(!initial_branching.empty(), "initial_branching needs at least one level");
  for (int b : initial_branching) require(b >= 1, "initial_branching entries must be >= 1");

  std::vector<std::string> warnings;
  if (sigma_d > sigma_n) {
    warnings.push_back("sigma_d exceeds sigma_n; emission noise wider than the node prior spread "
                       "tends to destabilize path assignments");
  }
  return warnings;
}

Hyperparams TrainConfig::hyperparams() const {
  Hyperparams h;
  h.alpha_star = alpha_star.empty()
                     ? Eigen::VectorXd::Zero(latent_dim)
                     : Eigen::Map<const Eigen::VectorXd>(alpha_star.data(), latent_dim).eval();
  h.gamma_star = gamma_star;
  h.sigma_n = sigma_n;
  h.sigma_d = sigma_d;
  return h;
}

bool ModelState::operator==(const ModelState& o) const {
  return tree == o.tree && autoencoder == o.autoencoder && opt == o.opt && var == o.var &&
         round == o.round;
}

ModelState init_model(const TrainConfig& cfg, const Corpus& corpus) {
  corpus.validate();
  for (const auto& w : cfg.validate()) spdlog::warn("{}", w);
  const Hyperparams h = cfg.hyperparams();

  ModelState s;
  s.tree = TruncatedTree(h);
  Rng rng = make_rng(cfg.seed, {0x7ee});
  std::normal_distribution<double> normal(0.0, h.sigma_n);
  std::function<void(const NodeId&, std::size_t)> grow = [&](const NodeId& id, std::size_t level) {
    if (level >= cfg.initial_branching.size()) return;
    const Eigen::VectorXd base = s.tree.at(id).mu;
    for (int i = 0; i < cfg.initial_branching[level]; ++i) {
      Eigen::VectorXd mu = base;
      for (Eigen::Index d = 0; d < mu.size(); ++d) mu(d) += normal(rng);
      s.tree.add_child(id, std::move(mu), h.sigma_n);
    }
    for (int i = 1; i <= cfg.initial_branching[level]; ++i) grow(id.child(i), level + 1);
  };
  grow(NodeId::root(), 0);

  s.autoencoder = AutoencoderParams::init(corpus.feature_dim(), cfg.latent_dim,
                                          make_rng(cfg.seed, {0xae})(), cfg.init_log_stdev);
  s.opt = RmspropState::for_params(s.autoencoder);
  s.opt.initial_rate = cfg.optimizer.learning_rate;
  s.opt.decay_rate = cfg.optimizer.decay_rate;
  s.opt.decay_steps = cfg.optimizer.decay_steps;
  s.opt.rho = cfg.optimizer.rho;
  s.opt.epsilon = cfg.optimizer.epsilon;

  const auto layout = TreeLayout::build(s.tree);
  for (const auto& seq : corpus.sequences) {
    s.var.push_back(SequenceVarState::uniform(layout, static_cast<int>(seq.cols()), h.gamma_star));
  }
  return s;
}

Eigen::MatrixXd prior_means(const ModelState& state, const TrainConfig& cfg) {
  if (cfg.prior == PriorKind::standard_normal) {
    return Eigen::MatrixXd::Zero(state.autoencoder.latent_dim(), 1);
  }
  const auto leaves = enumerate_paths(state.tree);
  Eigen::MatrixXd means(state.tree.dim(), static_cast<Eigen::Index>(leaves.size()));
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    means.col(static_cast<Eigen::Index>(p)) = state.tree.at(leaves[p]).mu;
  }
  return means;
}

LossTerms nn_phase(ModelState& state, const TrainConfig& cfg, const Corpus& corpus) {
  std::vector<ElementRef> order;
  for (std::size_t m = 0; m < corpus.sequences.size(); ++m) {
    for (Eigen::Index n = 0; n < corpus.sequences[m].cols(); ++n) {
      order.push_back({static_cast<int>(m), static_cast<int>(n)});
    }
  }
  Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(state.round), 0x5ff1e});
  std::shuffle(order.begin(), order.end(), rng);

  const Eigen::MatrixXd means = prior_means(state, cfg);
  const bool ncrp = cfg.prior == PriorKind::ncrp;
  const double sigma = ncrp ? state.tree.hyper().sigma_d : 1.0;
  const std::span<const SequenceVarState> assignments =
      ncrp ? std::span<const SequenceVarState>(state.var) : std::span<const SequenceVarState>();

  LossTerms total;
  std::size_t count = 0;
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0, batch = 0; start < order.size(); start += B, ++batch) {
    const auto len = std::min(B, order.size() - start);
    BatchSpec spec{corpus,
                   std::span<const ElementRef>(order.data() + start, len),
                   means,
                   assignments,
                   sigma,
                   cfg.seed,
                   static_cast<std::uint64_t>(state.round)};
    BatchResult r = kernels::batch_gradient(cfg.exec, state.autoencoder, spec);
    if (!std::isfinite(r.sum.total())) {
      std::ostringstream os;
      os << "non-finite loss at round " << state.round << ", batch " << batch
         << " (parameter norm " << std::sqrt(state.autoencoder.squared_norm()) << ", gradient norm "
         << std::sqrt(r.grad.squared_norm()) << ")";
      throw NumericalError(os.str());
    }
    const double scale = 1.0 / static_cast<double>(r.count);
    for (auto& t : r.grad.tensors()) t.flat() *= scale;
    step(state.autoencoder, r.grad, state.opt);
    total += r.sum;
    count += r.count;
  }
  if (!state.autoencoder.all_finite()) {
    throw NumericalError("autoencoder parameters became non-finite at round " +
                         std::to_string(state.round));
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  return {total.recon * inv, total.kl * inv};
}

double vi_phase(ModelState& state, const TrainConfig& cfg, const Corpus& corpus) {
  LatentTable latents = kernels::encode_corpus(cfg.exec, state.autoencoder, corpus);
  for (int i = 0; i < cfg.vi_sweeps_per_round; ++i) {
    vi_sweep(state.tree, state.var, latents, cfg.exec);
  }
  return compute_elbo(state.tree, state.var, latents).total();
}

RoundMetrics run_round(ModelState& state, const TrainConfig& cfg, const Corpus& corpus,
                       AdaptReport* log) {
  RoundMetrics out;
  out.round = state.round;
  const LossTerms nn = nn_phase(state, cfg, corpus);
  out.nn_loss = nn.total();
  out.recon = nn.recon;
  out.kl = nn.kl;
  if (cfg.prior == PriorKind::ncrp) {
    out.elbo = vi_phase(state, cfg, corpus);
    if (cfg.adapt.enabled) {
      LatentTable latents = kernels::encode_corpus(cfg.exec, state.autoencoder, corpus);
      AdaptReport report = adapt(state.tree, state.var, latents, cfg.adapt, cfg.seed, state.round);
      if (log) log->append(report);
    }
  } else {
    out.elbo = std::numeric_limits<double>::quiet_NaN();
  }
  const auto layout = TreeLayout::build(state.tree);
  out.n_paths = layout.path_count();
  out.n_nodes = layout.node_count();
  ++state.round;
  return out;
}

TrainResult continue_training(ModelState state, const TrainConfig& cfg, const Corpus& corpus,
                              int epochs) {
  corpus.validate();
  if (corpus.sequences.size() != state.var.size()) {
    throw InputError("corpus does not match the model's sequence count");
  }
  TrainResult result;
  for (int e = 0; e < epochs; ++e) {
    result.trace.push_back(run_round(state, cfg, corpus, &result.adapt_log));
    const auto& m = result.trace.back();
    spdlog::debug("round {} loss {:.6g} elbo {:.6g} paths {}", m.round, m.nn_loss, m.elbo,
                  m.n_paths);
  }
  result.state = std::move(state);
  return result;
}

TrainResult train(const TrainConfig& cfg, const Corpus& corpus) {
  return continue_training(init_model(cfg, corpus), cfg, corpus, cfg.epochs);
}

void write_metrics_csv(const std::vector<RoundMetrics>& trace, std::ostream& os) {
  os << "round,elbo,nn_loss,recon,kl,n_paths,n_nodes\n";
  os.precision(17);
  for (const auto& m : trace) {
    os << m.round << ',' << m.elbo << ',' << m.nn_loss << ',' << m.recon << ',' << m.kl << ','
       << m.n_paths << ',' << m.n_nodes << '\n';
  }
}

void write_metrics_csv(const std::vector<RoundMetrics>& trace, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  write_metrics_csv(trace, os);
}

}  // namespace hvae
