#include "vitca/profiling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "vitca/attention.hpp"
#include "vitca/dataset.hpp"
#include "vitca/errors.hpp"
#include "vitca/losses.hpp"
#include "vitca/neighborhood.hpp"
#include "vitca/ops.hpp"
#include "vitca/rollout.hpp"

namespace vitca {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

struct Timed {
  double forward_ms = std::numeric_limits<double>::infinity();
  double backward_ms = std::numeric_limits<double>::infinity();
};

}  // namespace

std::vector<AttentionBenchRow> bench_attention(const AttentionBenchConfig& config) {
  if (config.dim == 0 || config.heads == 0 || config.dim % config.heads != 0) {
    throw ContractError("bench-attn: dim must be a positive multiple of heads");
  }
  if (config.repeats == 0) throw ContractError("bench-attn: repeats must be >= 1");
  std::vector<AttentionBenchRow> rows;
  AttentionOptions options;
  options.heads = config.heads;
  for (std::size_t n : config.sizes) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw ContractError("bench-attn: size " + std::to_string(n) + " is not a square grid");
    const IndexTensor index = build_neighborhood_index(side, side, config.window, config.window, BorderMode::wrap);
    Rng rng(config.seed ^ n);
    Tensor q = random_tensor({1, n, config.dim}, rng, true);
    Tensor k = random_tensor({1, n, config.dim}, rng, true);
    Tensor v = random_tensor({1, n, config.dim}, rng, true);
    const Tensor g = random_tensor({1, n, config.dim}, rng, false);

    auto run = [&](bool local, Timed& t, std::vector<double>* result) {
      q.zero_grad();
      k.zero_grad();
      v.zero_grad();
      auto start = Clock::now();
      Tensor out = local ? localized_attention(q, k, v, index, options) : masked_global_attention(q, k, v, index, options);
      t.forward_ms = std::min(t.forward_ms, ms_since(start));
      const Tensor loss = sum(mul(out, g));
      start = Clock::now();
      loss.backward();
      t.backward_ms = std::min(t.backward_ms, ms_since(start));
      if (result) {
        result->assign(out.values().begin(), out.values().end());
        for (const Tensor* x : {&q, &k, &v}) result->insert(result->end(), x->grad().begin(), x->grad().end());
      }
    };

    Timed probe;
    std::vector<double> local_result, global_result;
    run(true, probe, &local_result);
    run(false, probe, &global_result);
    const double diff = max_diff(local_result, global_result);
    if (!(diff <= 1e-5)) {
      throw ContractError("bench-attn: kernels disagree by " + std::to_string(diff) + " at N=" + std::to_string(n));
    }
    for (bool local : {true, false}) {
      Timed t;
      for (std::size_t r = 0; r < config.repeats; ++r) run(local, t, nullptr);
      rows.push_back({n, local ? "local" : "global", t.forward_ms, t.backward_ms, t.forward_ms + t.backward_ms, diff});
    }
  }
  return rows;
}

std::string attention_bench_csv(const std::vector<AttentionBenchRow>& rows) {
  std::ostringstream out;
  out << "N,kernel,forward_ms,backward_ms,total_ms,max_abs_diff\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.4f,%.4f,%.4f,%.3e\n", r.cells, r.kernel.c_str(), r.forward_ms,
                  r.backward_ms, r.total_ms, r.max_abs_diff);
    out << buf;
  }
  return out.str();
}

MemoryBenchResult bench_memory(const MemoryBenchConfig& config) {
  config.model.validate();
  if (config.segments == 0 || config.segments > config.steps) {
    throw ContractError("bench-memory: segments must lie in [1, T]");
  }
  if (config.repeats == 0) throw ContractError("bench-memory: repeats must be >= 1");
  const auto& layout = config.model.layout;
  if (config.height % layout.patch_h != 0 || config.width % layout.patch_w != 0) {
    throw ContractError("bench-memory: image size must be a multiple of the patch size");
  }

  Rng init(config.seed);
  const std::size_t cells = (config.height / layout.patch_h) * (config.width / layout.patch_w);
  UpdateRuleParams params = init_params(config.model, cells, init);
  // A zero head makes every update vanish; give it small weights so the
  // rollout does real work.
  for (double& w : params.head_w.mutable_values()) w = 0.02 * init.normal();

  const Dataset data = synth_shapes(std::max<std::size_t>(config.batch, 1), config.height, config.width, config.seed);
  ImageBatch truth = data.images;
  if (layout.input_channels != 1 || layout.output_channels != 1) {
    truth = ImageBatch(config.batch, layout.input_channels, config.height, config.width, 0.5);
  }
  const CellGrid start = inject_input(seed_cells(layout, config.batch, config.height, config.width), truth);

  MemoryBenchResult result;
  std::vector<std::vector<double>> outputs;
  for (RolloutMode mode : {RolloutMode::plain, RolloutMode::checkpointed}) {
    MemoryBenchRow row;
    row.mode = mode == RolloutMode::plain ? "plain" : "checkpointed";
    row.forward_ms = row.backward_ms = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < config.repeats; ++r) {
      params.zero_grad();
      Rng rng(config.seed + 1);
      RolloutOptions options;
      options.mode = mode;
      options.segments = config.segments;
      const std::int64_t base = memory::stats().live_bytes;
      memory::reset_peak();
      auto t0 = Clock::now();
      CellGrid out = rollout(start, params, config.model, config.steps, config.sigma, rng, options);
      LossTerms loss = compute_loss(out, truth);
      row.forward_ms = std::min(row.forward_ms, ms_since(t0));
      t0 = Clock::now();
      loss.total.backward();
      row.backward_ms = std::min(row.backward_ms, ms_since(t0));
      row.peak_bytes = memory::stats().peak_bytes - base;
      if (r == 0) outputs.emplace_back(out.state.values().begin(), out.state.values().end());
    }
    result.rows.push_back(row);
  }
  params.zero_grad();
  result.forward_identical = outputs[0] == outputs[1];
  return result;
}

std::string memory_bench_csv(const MemoryBenchResult& result) {
  std::ostringstream out;
  out << "mode,forward_ms,backward_ms,peak_bytes,forward_identical\n";
  char buf[160];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%lld,%d\n", r.mode.c_str(), r.forward_ms, r.backward_ms,
                  static_cast<long long>(r.peak_bytes), result.forward_identical ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace vitca
