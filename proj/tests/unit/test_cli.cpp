#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("hvae_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (work() / name).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(HVAE_CLI_PATH) + " -q " + args + " >" + at("stdout.txt") +
                          " 2>" + at("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void make_corpus() {
  static bool done = false;
  if (done) return;
  REQUIRE(run("synth --branching 2,2 --seqs 30 --elems-per-seq 10 --features 16 --seed 3 -o " +
              at("train.csv") + " --heldout-out " + at("test.csv") + " --truth-out " + at("truth.json")) == 0);
  done = true;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a corpus and its held-out split") {
  make_corpus();
  CHECK(slurp(at("train.csv")).rfind("sequence_id,element_index,label,f_0,", 0) == 0);
  CHECK(fs::exists(at("test.csv")));
  const auto truth = nlohmann::json::parse(slurp(at("truth.json")));
  CHECK(truth.contains("children"));
}

TEST_CASE("train, eval, export, baseline") {
  make_corpus();
  REQUIRE(run("train --corpus " + at("train.csv") + " --epochs 3 -o " + at("model.json") + " --metrics " +
              at("metrics.csv") + " --adapt-log " + at("adapt.jsonl")) == 0);
  const std::string metrics = slurp(at("metrics.csv"));
  CHECK(metrics.rfind("round,elbo,nn_loss,recon,kl,n_paths,n_nodes\n", 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 4);
  std::istringstream log(slurp(at("adapt.jsonl")));
  for (std::string line; std::getline(log, line);) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("round"));
    CHECK(j.contains("action"));
    CHECK(j.contains("node"));
    CHECK(j.contains("metric"));
    CHECK(j.contains("threshold"));
  }

  REQUIRE(run("train --corpus " + at("train.csv") + " --resume " + at("model.json") + " --epochs 1 -o " +
              at("model2.json")) == 0);
  CHECK(nlohmann::json::parse(slurp(at("model2.json")))["round"] == 4);

  REQUIRE(run("eval --checkpoint " + at("model.json") + " --corpus " + at("test.csv") + " --label-corpus " +
              at("train.csv") + " -o " + at("report.json")) == 0);
  const auto report = nlohmann::json::parse(slurp(at("report.json")));
  CHECK(report["accuracy"].get<double>() >= 0.0);
  CHECK(report["accuracy"].get<double>() <= 1.0);
  CHECK(report.contains("loglik_mean"));
  CHECK(report.contains("path_histogram"));

  REQUIRE(run("export --checkpoint " + at("model.json") + " --format json --corpus " + at("train.csv") +
              " --representatives 2 -o " + at("tree.json")) == 0);
  const auto tree = nlohmann::json::parse(slurp(at("tree.json")));
  CHECK(tree["label"] == nlohmann::json{1});
  CHECK(tree.contains("mu"));
  CHECK(tree.contains("sigma"));
  CHECK(tree.contains("class"));
  REQUIRE(run("export --checkpoint " + at("model.json") + " --format dot -o " + at("tree.dot")) == 0);
  CHECK(slurp(at("tree.dot")).rfind("digraph", 0) == 0);

  REQUIRE(run("baseline --corpus " + at("train.csv") + " --test-corpus " + at("test.csv") +
              " --epochs 2 -o " + at("baseline.json")) == 0);
  const auto b = nlohmann::json::parse(slurp(at("baseline.json")));
  CHECK(b.contains("vae_ncrp"));
  CHECK(b.contains("vae_std_normal"));
  CHECK(b.contains("vae_gmm"));
  CHECK(b.contains("kmeans"));
}

TEST_CASE("config file with command-line override") {
  make_corpus();
  std::ofstream(at("cfg.json")) << R"({"epochs": 1, "batch_size": 8, "adapt": {"max_leaves": 3}})";
  REQUIRE(run("train --config " + at("cfg.json") + " --epochs 2 --corpus " + at("train.csv") + " -o " +
              at("m.json") + " --metrics " + at("m.csv")) == 0);
  const std::string metrics = slurp(at("m.csv"));
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
  const auto ck = nlohmann::json::parse(slurp(at("m.json")));
  CHECK(ck["config"]["batch_size"] == 8);
  CHECK(ck["config"]["adapt"]["max_leaves"] == 3);
}

TEST_CASE("input errors exit with 2") {
  make_corpus();
  CHECK(run("train --corpus " + at("missing.csv")) == 2);
  CHECK(run("train --bogus-flag") == 2);
  CHECK(run("frobnicate") == 2);
  std::ofstream(at("bad_cfg.json")) << R"({"epoch": 3})";
  CHECK(run("train --config " + at("bad_cfg.json") + " --corpus " + at("train.csv")) == 2);
  std::ofstream(at("broken_cfg.json")) << "{";
  CHECK(run("train --config " + at("broken_cfg.json") + " --corpus " + at("train.csv")) == 2);
  std::ofstream(at("bad.csv")) << "sequence_id,element_index,label,f_0\n0,0,,x\n";
  CHECK(run("train --corpus " + at("bad.csv")) == 2);
  std::ofstream(at("corrupt.json")) << R"({"format": "hvae-checkpoint", "vers)";
  CHECK(run("eval --checkpoint " + at("corrupt.json") + " --corpus " + at("test.csv")) == 2);
  CHECK(run("train --corpus " + at("train.csv") + " --batch-size 0") == 2);
  CHECK(slurp(at("stderr.txt")).find("batch_size") != std::string::npos);
}

TEST_CASE("numerical failure exits with 3") {
  make_corpus();
  CHECK(run("train --corpus " + at("train.csv") + " --epochs 2 --learning-rate 1e300 -o " + at("nan.json")) == 3);
  CHECK_FALSE(fs::exists(at("nan.json")));
}

}  // TEST_SUITE
