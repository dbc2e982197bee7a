// Microbenchmarks for the library's hot paths: the 3-D convolution stack in
// the video backbone, the projector/predictor heads, AUC computation, and the
// corruption kernels.

#include <benchmark/benchmark.h>

#include "avf/backbones.hpp"
#include "avf/corpus.hpp"
#include "avf/corrupt.hpp"
#include "avf/metrics.hpp"
#include "avf/rng.hpp"
#include "avf/tensor.hpp"

using namespace avf;

namespace {

void BM_VideoBackboneForward(benchmark::State& state) {
  NetworkSpec spec = NetworkSpec::by_name("tiny");
  Rng rng(1);
  VideoBackbone vb(spec, rng);
  const int T = static_cast<int>(state.range(0));
  Tensor clips = Tensor::zeros({1, 3, T, 32, 32});
  for (std::int64_t i = 0; i < clips.size(); ++i) clips.value()[i] = rng.uniform();
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(vb.forward(clips, false));
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_VideoBackboneForward)->Arg(5)->Arg(25);

void BM_PredictorForward(benchmark::State& state) {
  NetworkSpec spec = NetworkSpec::by_name("tiny");
  Rng rng(2);
  Predictor pred(spec, rng);
  Tensor x = Tensor::zeros({4, 25, spec.embed_dim});
  for (std::int64_t i = 0; i < x.size(); ++i) x.value()[i] = rng.normal();
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(pred.forward(x, false));
}
BENCHMARK(BM_PredictorForward);

void BM_RocAuc(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<double> scores(static_cast<std::size_t>(n));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    scores[static_cast<std::size_t>(i)] = rng.uniform();
    labels[static_cast<std::size_t>(i)] = i % 2;
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000);

void BM_Corrupt(benchmark::State& state) {
  const CorruptionFamily fam =
      all_corruption_families()[static_cast<std::size_t>(state.range(0))];
  VideoClip clip = generate_real(5, 0, 25, 48).first;
  for (auto _ : state) {
    Rng rng(7);
    benchmark::DoNotOptimize(corrupt(clip, {fam, 3}, rng));
  }
  state.SetLabel(to_string(fam));
}
BENCHMARK(BM_Corrupt)->DenseRange(0, 6);

}  // namespace

BENCHMARK_MAIN();
