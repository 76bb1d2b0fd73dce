// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "hvae/generative.hpp"
#include "hvae/kernels.hpp"
#include "hvae/trainer.hpp"

namespace {

using namespace hvae;

struct Fixture {
  Corpus corpus;
  TrainConfig cfg;
  ModelState state;
  LatentTable latents;

  Fixture() {
    SynthConfig sc;
    sc.n_seqs = 200;
    corpus = synth_corpus(sc).first;
    cfg.initial_branching = {3, 2};
    state = init_model(cfg, corpus);
    latents = kernels::serial::encode_corpus(state.autoencoder, corpus);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

template <Exec E>
void BM_VISweep(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    ModelState s = f.state;
    vi_sweep(s.tree, s.var, f.latents, E);
    benchmark::DoNotOptimize(s.var.front().phi.data());
  }
}

template <Exec E>
void BM_BatchGradient(benchmark::State& st) {
  auto& f = fixture();
  std::vector<ElementRef> elems;
  for (int m = 0; m < static_cast<int>(f.corpus.sequences.size()); ++m) {
    for (int n = 0; n < f.corpus.sequences[static_cast<std::size_t>(m)].cols(); ++n) {
      elems.push_back({m, n});
    }
  }
  const auto count = static_cast<std::size_t>(st.range(0));
  const Eigen::MatrixXd means = prior_means(f.state, f.cfg);
  BatchSpec spec{f.corpus, std::span<const ElementRef>(elems.data(), count), means,
                 f.state.var, f.cfg.sigma_d, f.cfg.seed, 0};
  for (auto _ : st) {
    BatchResult r = kernels::batch_gradient(E, f.state.autoencoder, spec);
    benchmark::DoNotOptimize(r.sum.recon);
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * count));
}

template <Exec E>
void BM_EncodeCorpus(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) {
    LatentTable t = kernels::encode_corpus(E, f.state.autoencoder, f.corpus);
    benchmark::DoNotOptimize(t.z.front().data());
  }
}

BENCHMARK(BM_VISweep<Exec::serial>)->Name("vi_sweep/serial");
BENCHMARK(BM_VISweep<Exec::parallel>)->Name("vi_sweep/omp");
BENCHMARK(BM_BatchGradient<Exec::serial>)->Name("batch_gradient/serial")->Arg(32)->Arg(1024);
BENCHMARK(BM_BatchGradient<Exec::parallel>)->Name("batch_gradient/omp")->Arg(32)->Arg(1024);
BENCHMARK(BM_EncodeCorpus<Exec::serial>)->Name("encode_corpus/serial");
BENCHMARK(BM_EncodeCorpus<Exec::parallel>)->Name("encode_corpus/omp");

}  // namespace

BENCHMARK_MAIN();
