#include <benchmark/benchmark.h>

#include "mate/constraints.hpp"
#include "mate/model.hpp"
#include "mate/sim_charged.hpp"
#include "mate/sim_socialnav.hpp"
#include "mate/trainer.hpp"

namespace {

mate::Episode charged_episode(std::size_t agents, std::size_t steps) {
  mate::sim::ChargedConfig cfg;
  cfg.n_particles = agents;
  cfg.n_steps = steps;
  return mate::sim::simulate_charged(cfg, 0);
}

void BM_ForwardTrain(benchmark::State& state) {
  const auto agents = static_cast<std::size_t>(state.range(0));
  const auto episode = charged_episode(agents, 20);
  const mate::Model model(mate::ModelConfig::make(static_cast<std::size_t>(state.range(1)), 2, 10, 10, 0.2));
  for (auto _ : state) {
    mate::Tape tape;
    auto out = model.forward(tape, episode, mate::RolloutMode::Train);
    benchmark::DoNotOptimize(out.rollout.predictions.back().value()[0]);
  }
}
BENCHMARK(BM_ForwardTrain)->Args({3, 32})->Args({5, 32})->Args({5, 64})->Unit(benchmark::kMillisecond);

void BM_EpisodeGradient(benchmark::State& state) {
  const auto episode = charged_episode(5, 20);
  const mate::Model model(mate::ModelConfig::make(32, 2, 10, 10, 0.2));
  mate::TrainConfig tc;
  tc.lambda1 = state.range(0) ? 1.0 : 0.0;
  tc.lambda2 = state.range(0) ? 0.001 : 0.0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto loss = mate::episode_loss(model, model.params(), episode, tc, seed++, true);
    benchmark::DoNotOptimize(loss.total);
  }
}
BENCHMARK(BM_EpisodeGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ConstraintLosses(benchmark::State& state) {
  const auto episode = charged_episode(5, 20);
  const mate::Model model(mate::ModelConfig::make(32, 2, 10, 10, 0.2));
  mate::Tape tape;
  const auto fwd = model.forward(tape, episode, mate::RolloutMode::Train);
  const std::vector<std::size_t> steps{3, 9, 15};
  for (auto _ : state) {
    auto report = mate::constraint_losses(tape, model.decoder(), model.params(), fwd.rollout, steps, true, true);
    benchmark::DoNotOptimize(report.mean_motion_variance_norm);
  }
}
BENCHMARK(BM_ConstraintLosses)->Unit(benchmark::kMillisecond);

void BM_SimulateCharged(benchmark::State& state) {
  mate::sim::ChargedConfig cfg;
  cfg.n_particles = static_cast<std::size_t>(state.range(0));
  cfg.n_steps = 50;
  std::uint64_t index = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mate::sim::simulate_charged(cfg, index++).positions[0]);
}
BENCHMARK(BM_SimulateCharged)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_SimulateSocialnav(benchmark::State& state) {
  mate::sim::SocialnavConfig cfg;
  cfg.n_agents = static_cast<std::size_t>(state.range(0));
  std::uint64_t index = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mate::sim::simulate_socialnav(cfg, index++).positions[0]);
}
BENCHMARK(BM_SimulateSocialnav)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
