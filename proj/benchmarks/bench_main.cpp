#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "pgg/agents.hpp"
#include "pgg/analysis.hpp"
#include "pgg/game.hpp"
#include "pgg/llm.hpp"
#include "pgg/random.hpp"

namespace {

void BM_ComputePayoffs(benchmark::State& state) {
  pgg::GameConfig config;
  config.num_agents = static_cast<int>(state.range(0));
  pgg::Rng rng(7);
  std::vector<pgg::Tokens> t(config.num_agents);
  for (auto& x : t) x = static_cast<pgg::Tokens>(pgg::uniform_index(rng, 11));
  for (auto _ : state) benchmark::DoNotOptimize(pgg::compute_payoffs(t, config));
}
BENCHMARK(BM_ComputePayoffs)->Arg(2)->Arg(4)->Arg(16)->Arg(32);

void BM_PlayGameScripted(benchmark::State& state) {
  pgg::GameConfig config;
  config.num_agents = static_cast<int>(state.range(0));
  std::vector<std::unique_ptr<pgg::DecisionPolicy>> agents;
  for (int i = 0; i < config.num_agents; ++i) {
    agents.push_back(std::make_unique<pgg::ScriptedAgent>(pgg::ConditionalCooperator{}));
  }
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(pgg::play_game(config, agents, ++seed));
}
BENCHMARK(BM_PlayGameScripted)->Arg(4)->Arg(16)->Arg(32);

void BM_BootstrapCI(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  pgg::Rng data_rng(11);
  std::vector<double> a(n), b(n);
  for (auto& x : a) x = static_cast<double>(pgg::uniform_index(data_rng, 1000)) / 1000.0;
  for (auto& x : b) x = static_cast<double>(pgg::uniform_index(data_rng, 1000)) / 1000.0;
  pgg::Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(pgg::bootstrap_ci(a, b, rng));
}
BENCHMARK(BM_BootstrapCI)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_ParseContribution(benchmark::State& state) {
  const std::string reply = "I think the group benefits, so my contribution is 7 tokens.";
  for (auto _ : state) benchmark::DoNotOptimize(pgg::parse_contribution(reply, 10));
}
BENCHMARK(BM_ParseContribution);

}  // namespace
BENCHMARK_MAIN();
