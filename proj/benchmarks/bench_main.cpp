#include <benchmark/benchmark.h>

#include "tailr/bound_lab.hpp"
#include "tailr/metrics.hpp"
#include "tailr/objectives.hpp"
#include "tailr/rng.hpp"
#include "tailr/seqmodel.hpp"
#include "tailr/synth.hpp"

namespace {

using namespace tailr;

void BM_RunAllChecks(benchmark::State& state) {
  const auto trials = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_all_checks(trials, 1));
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(trials));
}
BENCHMARK(BM_RunAllChecks)->Arg(10)->Arg(100);

void BM_JointTvd(benchmark::State& state) {
  Rng rng(3);
  const auto p = FactorizedSeqDist::random(4, 3, rng);
  const auto q = FactorizedSeqDist::random(4, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(joint_tvd(p, q));
}
BENCHMARK(BM_JointTvd);

void BM_TrainerStep(benchmark::State& state) {
  SequenceModel model(ModelConfig{50, 32, 64}, 1, 0.1);
  SequenceModel sampler(ModelConfig{50, 32, 64}, 7, 0.5);
  Rng rng(9);
  Dataset batch;
  for (int i = 0; i < 32; ++i) batch.push_back(sampler.sample(20, rng).seq);
  TrainRun run;
  run.objective = state.range(0) == 0 ? "mle" : "tailr";
  run.tailr.gamma = 0.2;
  Trainer trainer(model, run);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch));
  state.SetLabel(run.objective);
}
BENCHMARK(BM_TrainerStep)->Arg(0)->Arg(1);

void BM_Sample(benchmark::State& state) {
  SequenceModel model(ModelConfig{50, 32, 64}, 7, 0.5);
  Rng rng(11);
  for (auto _ : state) benchmark::DoNotOptimize(model.sample(20, rng));
}
BENCHMARK(BM_Sample);

void BM_SequenceLogprob(benchmark::State& state) {
  SequenceModel model(ModelConfig{50, 32, 64}, 7, 0.5);
  Rng rng(13);
  const auto seq = model.sample(20, rng).seq;
  for (auto _ : state) benchmark::DoNotOptimize(model.sequence_logprob(seq));
}
BENCHMARK(BM_SequenceLogprob);

Corpus random_corpus(std::size_t n, std::size_t len, std::size_t vocab,
                     std::uint64_t seed) {
  Rng rng(seed);
  Corpus c(n);
  for (auto& s : c) {
    s.resize(1 + rng.uniform_int(len));
    for (auto& t : s) t = 1 + rng.uniform_int(vocab - 1);
  }
  return c;
}

void BM_Bleu4(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto hyp = random_corpus(n, 20, 50, 1);
  const auto ref = random_corpus(n, 20, 50, 2);
  for (auto _ : state) benchmark::DoNotOptimize(bleu_n(hyp, ref, 4));
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_Bleu4)->Arg(100)->Arg(500);

void BM_SelfBleu4Capped(benchmark::State& state) {
  const auto corpus = random_corpus(500, 20, 50, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(self_bleu_n(corpus, 4, 100, 5));
}
BENCHMARK(BM_SelfBleu4Capped);

void BM_ProxyTvd(benchmark::State& state) {
  Rng rng(17);
  const auto dist = random_dist(50, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(proxy_tvd_estimate(dist, 3, 0.2));
}
BENCHMARK(BM_ProxyTvd);

}  // namespace

BENCHMARK_MAIN();
