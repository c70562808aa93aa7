#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "cdsvae/nn.hpp"
#include "cdsvae/runner.hpp"
#include "cdsvae/synthseq.hpp"

using namespace cdsvae;

static void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  nn::Rng rng(0);
  const auto a = nn::standard_normal({n, n}, rng);
  const auto b = nn::standard_normal({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<int64_t>(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

static void BM_AffineBackward(benchmark::State& state) {
  nn::Rng rng(0);
  const auto x = nn::standard_normal({512, 256}, rng);
  auto w = nn::standard_normal({256, 256}, rng);
  auto b = nn::standard_normal({256}, rng);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  std::vector<ad::Tensor> params{w, b};
  for (auto _ : state) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    const auto loss = ad::sum(ad::affine(x, w, b));
    ad::backward(tape, loss, params);
  }
}
BENCHMARK(BM_AffineBackward);

static void BM_LstmStep(benchmark::State& state) {
  nn::Rng rng(0);
  nn::ParamSet ps;
  const nn::LstmCell cell(ps, "lstm", 64, 64, rng);
  const auto projected = nn::standard_normal({64, 256}, rng);
  auto s = cell.zero_state(64);
  for (auto _ : state) {
    s = cell.step(projected, s);
    benchmark::DoNotOptimize(s.h);
  }
}
BENCHMARK(BM_LstmStep);

static void BM_TrainStep(benchmark::State& state) {
  run::RunConfig cfg;
  const auto data = synth::generate(cfg.synth.geometry, 256);
  run::Trainer trainer(cfg, data);
  std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch_size));
  std::iota(idx.begin(), idx.end(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(idx));
  state.SetItemsProcessed(state.iterations() * cfg.batch_size);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_GenerateSequences(benchmark::State& state) {
  synth::SyntheticConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(synth::generate(cfg, 100));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_GenerateSequences)->Unit(benchmark::kMillisecond);
