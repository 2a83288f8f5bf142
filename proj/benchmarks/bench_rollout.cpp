#include <benchmark/benchmark.h>

#include "vitca/dataset.hpp"
#include "vitca/losses.hpp"
#include "vitca/rollout.hpp"

namespace {

using namespace vitca;

ModelConfig desk_model() {
  ModelConfig c;
  c.embed_dim = 64;
  c.heads = 4;
  c.mlp_dim = 256;
  c.layout.hidden_channels = 32;
  return c;
}

struct Setup {
  ModelConfig config = desk_model();
  UpdateRuleParams params;
  ImageBatch truth;
  CellGrid start;

  explicit Setup(std::size_t batch) {
    Rng rng(1);
    params = init_params(config, 256, rng);
    for (double& w : params.head_w.mutable_values()) w = 0.02 * rng.normal();
    truth = synth_shapes(batch, 16, 16, 1).images;
    start = inject_input(seed_cells(config.layout, batch, 16, 16), truth);
  }
};

// One update step on a batch of 16x16 grids, forward only.
void BM_UpdateStep(benchmark::State& state) {
  Setup s(static_cast<std::size_t>(state.range(0)));
  Rng rng(2);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(apply_update_rule(s.start, s.params, s.config, 0.5, rng));
}
BENCHMARK(BM_UpdateStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

// A training-style rollout of T steps plus backward through it.
void BM_RolloutTrain(benchmark::State& state) {
  Setup s(8);
  const auto mode = static_cast<RolloutMode>(state.range(1));
  for (auto _ : state) {
    Rng rng(3);
    RolloutOptions o;
    o.mode = mode;
    const CellGrid out = rollout(s.start, s.params, s.config, static_cast<std::size_t>(state.range(0)), 0.5, rng, o);
    compute_loss(out, s.truth).total.backward();
    s.params.zero_grad();
  }
}
BENCHMARK(BM_RolloutTrain)
    ->Args({16, static_cast<int>(RolloutMode::plain)})
    ->Args({16, static_cast<int>(RolloutMode::checkpointed)})
    ->Args({16, static_cast<int>(RolloutMode::fusion_mitosis)})
    ->Unit(benchmark::kMillisecond);

}  // namespace
