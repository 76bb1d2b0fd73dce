// Command-line front end: synth, train, eval, export, baseline.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hvae/baselines.hpp"
#include "hvae/checkpoint.hpp"
#include "hvae/corpus.hpp"
#include "hvae/errors.hpp"
#include "hvae/eval.hpp"
#include "hvae/generative.hpp"
#include "hvae/trainer.hpp"

namespace {

using namespace hvae;
using nlohmann::json;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw InputError("cannot open " + path + " for writing");
  os << text;
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

// Flags that override config-file values when given.
struct ConfigOverrides {
  std::string config_path;
  std::optional<int> epochs, batch_size, vi_sweeps, latent_dim, max_leaves, split_arity;
  std::optional<double> sigma_n, sigma_d, gamma_star, radius, fraction, learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> initial_branching;
  bool no_adapt = false;
  bool parallel = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--vi-sweeps", vi_sweeps, "VI sweeps per round");
    cmd->add_option("--latent-dim", latent_dim);
    cmd->add_option("--sigma-n", sigma_n);
    cmd->add_option("--sigma-d", sigma_d);
    cmd->add_option("--gamma-star", gamma_star);
    cmd->add_option("--radius-threshold", radius);
    cmd->add_option("--fraction-threshold", fraction);
    cmd->add_option("--max-leaves", max_leaves);
    cmd->add_option("--split-arity", split_arity);
    cmd->add_option("--learning-rate", learning_rate);
    cmd->add_option("--initial-branching", initial_branching, "children per level of the start tree")
        ->delimiter(',');
    cmd->add_option("--seed", seed);
    cmd->add_flag("--no-adapt", no_adapt, "disable grow/prune");
    cmd->add_flag("--parallel", parallel, "use the OpenMP kernels");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) c = TrainConfig::from_json(read_json(config_path));
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (vi_sweeps) c.vi_sweeps_per_round = *vi_sweeps;
    if (latent_dim) c.latent_dim = *latent_dim;
    if (sigma_n) c.sigma_n = *sigma_n;
    if (sigma_d) c.sigma_d = *sigma_d;
    if (gamma_star) c.gamma_star = *gamma_star;
    if (radius) c.adapt.radius_threshold = *radius;
    if (fraction) c.adapt.fraction_threshold = *fraction;
    if (max_leaves) c.adapt.max_leaves = *max_leaves;
    if (split_arity) c.adapt.split_arity = *split_arity;
    if (learning_rate) c.optimizer.learning_rate = *learning_rate;
    if (initial_branching) c.initial_branching = *initial_branching;
    if (seed) c.seed = *seed;
    if (no_adapt) c.adapt.enabled = false;
    if (parallel) c.exec = Exec::parallel;
    return c;
  }
};

struct SynthArgs {
  SynthConfig cfg;
  std::string out = "corpus.csv";
  std::string heldout_out;
  int heldout_stride = 5;
  std::string truth_out;
  std::string lift = "random";
};

int run_synth(const SynthArgs& a) {
  SynthConfig cfg = a.cfg;
  cfg.lift = a.lift == "identity" ? Lift::identity : Lift::random_orthonormal;
  auto [corpus, truth] = synth_corpus(cfg);
  spdlog::info("separation ratio {:.3f}", separation_ratio(truth, cfg));
  if (!a.heldout_out.empty()) {
    auto [train, heldout] = split_sequences(corpus, a.heldout_stride);
    write_corpus_csv(train, a.out);
    write_corpus_csv(heldout, a.heldout_out);
  } else {
    write_corpus_csv(corpus, a.out);
  }
  if (!a.truth_out.empty()) write_text(a.truth_out, tree_to_json(truth.tree).dump(2) + "\n");
  return 0;
}

struct TrainArgs {
  ConfigOverrides overrides;
  std::string corpus;
  std::string checkpoint = "model.json";
  std::string resume;
  std::string metrics;
  std::string adapt_log;
};

int run_train(const TrainArgs& a) {
  const Corpus corpus = ingest(a.corpus);
  TrainResult result;
  TrainConfig cfg;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    cfg = ck.config;
    const int epochs = a.overrides.epochs.value_or(cfg.epochs);
    result = continue_training(std::move(ck.state), cfg, corpus, epochs);
  } else {
    cfg = a.overrides.resolve();
    result = train(cfg, corpus);
  }
  save_checkpoint(cfg, result.state, a.checkpoint);
  if (!a.metrics.empty()) write_metrics_csv(result.trace, std::filesystem::path(a.metrics));
  if (!a.adapt_log.empty()) {
    std::string lines;
    for (const auto& e : result.adapt_log.events) lines += e.to_json().dump() + "\n";
    write_text(a.adapt_log, lines);
  }
  if (!result.trace.empty()) {
    const auto& m = result.trace.back();
    spdlog::info("round {}: loss {:.6g}, elbo {:.6g}, {} paths", m.round, m.nn_loss, m.elbo,
                 m.n_paths);
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint = "model.json";
  std::string corpus;
  std::string label_corpus;
  int samples = 10;
  std::uint64_t seed = 1;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto& s = ck.state;
  const Corpus test = ingest(a.corpus);
  EvalReport report;
  if (test.has_any_label() || !a.label_corpus.empty()) {
    const Corpus labeled = a.label_corpus.empty() ? test : ingest(a.label_corpus);
    const NodeLabels labels = label_nodes(s.tree, s.autoencoder, labeled, ck.config.exec);
    report = retrieve_f1(s.tree, s.autoencoder, labels, test, ck.config.exec);
  } else {
    report.paths = enumerate_paths(s.tree);
    report.path_histogram = path_histogram(assign_corpus(s.tree, s.autoencoder, test),
                                           static_cast<int>(report.paths.size()));
  }
  const LogLikelihood ll = test_loglik(s.autoencoder, test, a.samples, a.seed);
  report.loglik_sum = ll.sum;
  report.loglik_mean = ll.mean;
  write_text(a.out, report.to_json().dump(2) + "\n");
  return 0;
}

struct ExportArgs {
  std::string checkpoint = "model.json";
  std::string format = "json";
  std::string corpus;
  int representatives = 0;
  std::string out;
};

int run_export(const ExportArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto& s = ck.state;
  std::optional<NodeLabels> labels;
  std::optional<std::map<NodeId, std::vector<ElementRef>>> reps;
  if (!a.corpus.empty()) {
    const Corpus corpus = ingest(a.corpus);
    if (corpus.has_any_label()) labels = label_nodes(s.tree, s.autoencoder, corpus);
    if (a.representatives > 0) {
      reps = representatives(s.tree, s.autoencoder, corpus, a.representatives);
    }
  } else if (a.representatives > 0) {
    throw InputError("--representatives needs --corpus");
  }
  const NodeLabels* lp = labels ? &*labels : nullptr;
  const auto* rp = reps ? &*reps : nullptr;
  if (a.format == "dot") {
    write_text(a.out, export_tree_dot(s.tree, lp, rp));
  } else if (a.format == "json") {
    write_text(a.out, export_tree_json(s.tree, lp, rp).dump(2) + "\n");
  } else {
    throw InputError("unknown export format '" + a.format + "'");
  }
  return 0;
}

struct BaselineArgs {
  ConfigOverrides overrides;
  std::string corpus;
  std::string test_corpus;
  int k = 0;
  int samples = 10;
  std::string out;
};

json model_summary(const TrainConfig& cfg, const Corpus& train_set, const Corpus& test,
                   int samples) {
  const TrainResult r = train(cfg, train_set);
  const auto& s = r.state;
  json j;
  const LogLikelihood ll = test_loglik(s.autoencoder, test, samples, cfg.seed);
  j["loglik_sum"] = ll.sum;
  j["loglik_mean"] = ll.mean;
  j["n_paths"] = enumerate_paths(s.tree).size();
  if (train_set.has_any_label() && cfg.prior == PriorKind::ncrp) {
    const NodeLabels labels = label_nodes(s.tree, s.autoencoder, train_set, cfg.exec);
    const EvalReport e = retrieve_f1(s.tree, s.autoencoder, labels, test, cfg.exec);
    j["accuracy"] = e.accuracy;
    j["f1"] = e.f1;
  }
  return j;
}

int run_baseline(const BaselineArgs& a) {
  const TrainConfig cfg = a.overrides.resolve();
  const Corpus train_set = ingest(a.corpus);
  const Corpus test = a.test_corpus.empty() ? train_set : ingest(a.test_corpus);
  json out;
  out["vae_ncrp"] = model_summary(cfg, train_set, test, a.samples);
  const int k = a.k > 0 ? a.k : out["vae_ncrp"]["n_paths"].get<int>();
  out["vae_std_normal"] = model_summary(standard_normal_variant(cfg), train_set, test, a.samples);
  out["vae_gmm"] = model_summary(gmm_variant(cfg, k), train_set, test, a.samples);
  if (train_set.has_any_label()) {
    const EvalReport km = kmeans_eval(train_set, test, k, cfg.seed, cfg.exec);
    out["kmeans"] = {{"k", k}, {"accuracy", km.accuracy}, {"f1", km.f1}};
  }
  write_text(a.out, out.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical nonparametric variational autoencoder"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  s->add_option("--branching", synth.cfg.branching, "children per level")->delimiter(',');
  s->add_option("--elems-per-seq", synth.cfg.elems_per_seq);
  s->add_option("--seqs", synth.cfg.n_seqs);
  s->add_option("--features", synth.cfg.feature_dim);
  s->add_option("--latent-dim", synth.cfg.latent_dim);
  s->add_option("--noise", synth.cfg.noise, "feature noise stdev");
  s->add_option("--sigma-d", synth.cfg.sigma_d, "latent emission stdev");
  s->add_option("--separation", synth.cfg.separation);
  s->add_option("--level-shrink", synth.cfg.level_shrink);
  s->add_option("--gamma-star", synth.cfg.gamma_star);
  s->add_option("--lift", synth.lift)->check(CLI::IsMember({"random", "identity"}));
  s->add_option("--seed", synth.cfg.seed);
  s->add_option("-o,--out", synth.out);
  s->add_option("--heldout-out", synth.heldout_out, "also write every n-th sequence here");
  s->add_option("--heldout-stride", synth.heldout_stride);
  s->add_option("--truth-out", synth.truth_out, "generating tree as JSON");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint");
  tr.overrides.attach(t);
  t->add_option("--corpus", tr.corpus)->required();
  t->add_option("-o,--checkpoint", tr.checkpoint);
  t->add_option("--resume", tr.resume, "continue from this checkpoint");
  t->add_option("--metrics", tr.metrics, "per-round metrics CSV");
  t->add_option("--adapt-log", tr.adapt_log, "structure events as JSON lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a checkpoint on a corpus");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--corpus", ev.corpus)->required();
  e->add_option("--label-corpus", ev.label_corpus, "corpus used to label nodes");
  e->add_option("--samples", ev.samples, "Monte Carlo samples per element");
  e->add_option("--seed", ev.seed);
  e->add_option("-o,--out", ev.out);

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "write the learned tree as JSON or DOT");
  x->add_option("--checkpoint", ex.checkpoint);
  x->add_option("--format", ex.format)->check(CLI::IsMember({"json", "dot"}));
  x->add_option("--corpus", ex.corpus, "corpus for node classes and representatives");
  x->add_option("--representatives", ex.representatives);
  x->add_option("-o,--out", ex.out);

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "compare against k-means and flat-prior VAEs");
  bl.overrides.attach(b);
  b->add_option("--corpus", bl.corpus)->required();
  b->add_option("--test-corpus", bl.test_corpus);
  b->add_option("--k", bl.k, "k-means clusters and mixture size (default: learned leaves)");
  b->add_option("--samples", bl.samples);
  b->add_option("-o,--out", bl.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitInput;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("hvae"));
  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*x) return run_export(ex);
    if (*b) return run_baseline(bl);
  } catch (const NumericalError& err) {
    spdlog::error("{}", err.what());
    return kExitNumerical;
  } catch (const InputError& err) {
    spdlog::error("{}", err.what());
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& err) {
    spdlog::error("{}", err.what());
    return kExitInput;
  }
  return kExitInput;
}
