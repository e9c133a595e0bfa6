#include <benchmark/benchmark.h>

#include "kapr/env.hpp"
#include "kapr/mfi.hpp"
#include "kapr/policy.hpp"
#include "support/fixtures.hpp"

using namespace kapr;

namespace {

void BM_DynamicPolicyForward(benchmark::State& state) {
  const auto actions = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  const DynamicPolicy pol({500, 200, 512, 256, 1});
  const auto s = kapr::testing::random_vector(500, rng);
  const auto a = kapr::testing::random_matrix(actions, 200, rng);
  for (auto _ : state) benchmark::DoNotOptimize(pol.forward(s, a));
  state.SetItemsProcessed(state.iterations() * actions);
}
BENCHMARK(BM_DynamicPolicyForward)->Arg(10)->Arg(50)->Arg(250);

void BM_PruneActions(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pop = kapr::testing::populations(500, 300, 800, 40, 60);
  const auto g = kapr::testing::random_graph(pop, 40000, 2);
  const auto tab = kapr::testing::random_table(pop, 100, 3);
  const auto patterns = PatternSet::defaults();
  const Environment env(g, tab, patterns, {1, 3, n});
  Rng rng(4);
  std::vector<State> states;
  for (int i = 0; i < 64; ++i) {
    states.push_back(kapr::testing::random_state(env, product(static_cast<std::uint32_t>(rng.below(500))), 1, rng));
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(prune_actions(states[i++ % states.size()], g, tab, patterns, n, 3));
}
BENCHMARK(BM_PruneActions)->Arg(50)->Arg(250);

void BM_MfiProbability(benchmark::State& state) {
  MfiConfig c;
  MfiModel m(c, TargetRelation::Substitute);
  Rng rng(5);
  const auto vi = kapr::testing::random_vector(300, rng), vj = kapr::testing::random_vector(300, rng);
  const auto ci = kapr::testing::random_vector(100, rng), cj = kapr::testing::random_vector(100, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.probability(vi, vj, ci, cj));
}
BENCHMARK(BM_MfiProbability);

}  // namespace

BENCHMARK_MAIN();
