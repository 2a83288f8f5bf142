#include "vitca/rollout.hpp"

#include "vitca/errors.hpp"
#include "vitca/ops.hpp"

namespace vitca {

namespace {

CellGrid run_steps(CellGrid grid, const UpdateRuleParams& params, const ModelConfig& config, std::size_t steps,
                   double sigma, Rng& rng, const StepOptions& step) {
  for (std::size_t t = 0; t < steps; ++t) grid = apply_update_rule(grid, params, config, sigma, rng, step);
  return grid;
}

CellGrid checkpoint_segment(const CellGrid& in, const UpdateRuleParams& params, const ModelConfig& config,
                            std::size_t steps, double sigma, Rng& rng, const StepOptions& step) {
  const Rng replay = rng;
  std::vector<double> values;
  {
    NoGradGuard no_grad;
    const CellGrid out = run_steps(in, params, config, steps, sigma, rng, step);
    values.assign(out.state.values().begin(), out.state.values().end());
  }
  CellGrid result = in;
  StepOptions replay_step = step;
  replay_step.attention_weights = nullptr;
  result.state = make_op_result(
      in.state.shape(), std::move(values), {in.state},
      [shell = in.detached(), params, config, steps, sigma, replay, replay_step](BackwardContext& ctx) {
        CellGrid start = shell;
        start.state = ctx.input(0).detach();
        start.state.set_requires_grad(true);
        Rng r = replay;
        EnableGradGuard grad_on;
        const CellGrid out = run_steps(start, params, config, steps, sigma, r, replay_step);
        backward(out.state, ctx.grad_output());
        auto gi = ctx.input_grad(0);
        const auto g = start.state.grad();
        for (std::size_t i = 0; i < gi.size() && i < g.size(); ++i) gi[i] += g[i];
      },
      true);
  return result;
}

}  // namespace

const char* rollout_name(RolloutMode mode) {
  switch (mode) {
    case RolloutMode::plain: return "plain";
    case RolloutMode::checkpointed: return "checkpointed";
    case RolloutMode::fusion_mitosis: return "fusion-mitosis";
  }
  return "?";
}

RolloutMode parse_rollout(const std::string& text) {
  if (text == "plain") return RolloutMode::plain;
  if (text == "checkpointed") return RolloutMode::checkpointed;
  if (text == "fusion-mitosis") return RolloutMode::fusion_mitosis;
  throw ConfigError("unknown rollout mode '" + text + "' (expected plain, checkpointed or fusion-mitosis)");
}

CellGrid rollout(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config, std::size_t steps,
                 double sigma, Rng& rng, const RolloutOptions& options) {
  switch (options.mode) {
    case RolloutMode::plain:
      return run_steps(grid, params, config, steps, sigma, rng, options.step);
    case RolloutMode::fusion_mitosis:
      return fusion_mitosis_rollout(grid, params, config, steps, sigma, rng, options.fusion_pre, options.fusion_post,
                                    options.step);
    case RolloutMode::checkpointed:
      break;
  }
  if (steps == 0) return grid;
  const std::size_t segments = options.segments ? options.segments : std::max<std::size_t>(1, steps / 2);
  if (segments > steps) {
    throw ContractError(std::to_string(segments) + " checkpoint segments for " + std::to_string(steps) + " steps");
  }
  const std::size_t chunk = steps / segments;
  CellGrid g = grid;
  for (std::size_t s = 0; s + 1 < segments; ++s) g = checkpoint_segment(g, params, config, chunk, sigma, rng, options.step);
  return run_steps(g, params, config, steps - chunk * (segments - 1), sigma, rng, options.step);
}

CellGrid fuse_cells(const CellGrid& grid) {
  if (grid.rows % 2 || grid.cols % 2) {
    throw DimensionError("fusion needs an even cell grid, got " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols));
  }
  const std::size_t l = grid.layout.cell_length();
  CellGrid out = grid;
  out.rows = grid.rows / 2;
  out.cols = grid.cols / 2;
  const Tensor pooled = avg_pool2x2(reshape(grid.state, {grid.batch, grid.rows, grid.cols, l}));
  out.state = reshape(pooled, {grid.batch, out.cells(), l});
  return out;
}

CellGrid mitosis(const CellGrid& grid) {
  const std::size_t l = grid.layout.cell_length();
  CellGrid out = grid;
  out.rows = grid.rows * 2;
  out.cols = grid.cols * 2;
  const Tensor grown = duplicate2x2(reshape(grid.state, {grid.batch, grid.rows, grid.cols, l}));
  out.state = reshape(grown, {grid.batch, out.cells(), l});
  return out;
}

CellGrid fusion_mitosis_rollout(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                                std::size_t steps, double sigma, Rng& rng, std::size_t fusion_pre,
                                std::size_t fusion_post, const StepOptions& step) {
  if (grid.rows % 2 || grid.cols % 2) {
    throw DimensionError("fusion/mitosis rollout needs an even cell grid, got " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols));
  }
  if (steps < fusion_pre + fusion_post + 1) {
    throw ContractError("fusion/mitosis rollout needs at least " + std::to_string(fusion_pre + fusion_post + 1) +
                        " steps, got " + std::to_string(steps));
  }
  if (config.layout.positional == PositionalKind::learned) {
    throw ContractError("fusion/mitosis cannot run with a learned positional table");
  }
  CellGrid g = run_steps(grid, params, config, fusion_pre, sigma, rng, step);
  const ImageBatch stash = input_image(g);
  g = fuse_cells(g);
  g = run_steps(g, params, config, steps - fusion_pre - fusion_post, sigma, rng, step);
  g = mitosis(g);
  g = refill_positional(inject_input(g, stash));
  return run_steps(g, params, config, fusion_post, sigma, rng, step);
}

}  // namespace vitca
