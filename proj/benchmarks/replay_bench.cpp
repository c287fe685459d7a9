#include <benchmark/benchmark.h>

#include "wmft/envs.hpp"
#include "wmft/replay.hpp"
#include "wmft/sum_tree.hpp"

namespace wmft {
namespace {

void BM_SumTreeSetFind(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SumTree tree(n);
  Rng rng = make_stream(5, 0);
  for (std::size_t i = 0; i < n; ++i) tree.set(i, uniform_real(rng, 0.1, 1.0));
  std::size_t slot = 0;
  for (auto _ : state) {
    tree.set(slot, uniform_real(rng, 0.1, 1.0));
    benchmark::DoNotOptimize(tree.find(uniform_real(rng, 0.0, tree.total())));
    slot = (slot + 1) % n;
  }
}
BENCHMARK(BM_SumTreeSetFind)->Arg(1 << 10)->Arg(1 << 16)->Arg(1 << 20);

void BM_SampleBalanced(benchmark::State& state) {
  const EnvSpec env = make_env_spec(EnvId::kReach2d);
  EpisodeBuffer offline(Source::kOffline, 5);
  EpisodeBuffer online(Source::kOnline, 5);
  for (auto& ep : gen_medium_dataset(env, 100, 1.0, 1)) offline.add_episode(std::move(ep));
  for (auto& ep : gen_medium_dataset(env, 20, 1.0, 2)) online.add_episode(std::move(ep));
  Rng rng = make_stream(6, 0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_balanced(offline, online, 256, 5, rng));
}
BENCHMARK(BM_SampleBalanced);

}  // namespace
}  // namespace wmft
