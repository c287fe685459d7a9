#include <benchmark/benchmark.h>

#include "wmft/netcore.hpp"

namespace wmft {
namespace {

void BM_MlpForwardBatch(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const int hidden = static_cast<int>(state.range(1));
  Rng rng = make_stream(1, 0);
  const MlpParams p = make_mlp(18, hidden, 16, 2, rng);
  const Matrix x = Matrix::Random(18, batch);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward_batch(p, x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBatch)->Args({1, 32})->Args({128, 32})->Args({512, 32})->Args({512, 512});

void BM_MlpBackwardBatch(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_stream(2, 0);
  const MlpParams p = make_mlp(18, 32, 16, 2, rng);
  const Matrix x = Matrix::Random(18, batch);
  const Matrix cot = Matrix::Random(16, batch);
  for (auto _ : state) {
    ForwardTape tape;
    mlp_forward_batch(p, x, &tape);
    GradBuffer g = zeros_like(p);
    benchmark::DoNotOptimize(mlp_backward_batch(p, tape, cot, g));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpBackwardBatch)->Arg(64)->Arg(256);

}  // namespace
}  // namespace wmft
