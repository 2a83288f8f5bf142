#include "vitca/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vitca/dataset.hpp"
#include "vitca/errors.hpp"
#include "vitca/metrics.hpp"
#include "vitca/rollout.hpp"
#include "vitca/tensor.hpp"

namespace vitca {

namespace {

constexpr std::uint64_t kStreamMix = 0x9E3779B97F4A7C15ULL;

Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed ^ ((index + 1) * kStreamMix)); }

Precision model_precision(const Model& model) {
  return model.params.embed_w.defined() ? model.params.embed_w.precision() : default_precision();
}

ImageBatch clamped(ImageBatch img) {
  for (double& v : img.values) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// Largest |difference| between the output slabs of two same-shaped grids.
double output_drift(const CellGrid& a, const CellGrid& b) {
  const auto& l = a.layout;
  const auto va = a.state.values(), vb = b.state.values();
  const std::size_t len = l.cell_length();
  double m = 0.0;
  for (std::size_t cell = 0; cell < a.batch * a.cells(); ++cell) {
    const std::size_t base = cell * len + l.output_offset();
    for (std::size_t k = 0; k < l.output_length(); ++k) m = std::max(m, std::fabs(va[base + k] - vb[base + k]));
  }
  return m;
}

struct Scores {
  double psnr = 0.0, ssim = 0.0;
};

Scores mean_scores(const ImageBatch& a, const ImageBatch& truth) {
  Scores s;
  for (std::size_t n = 0; n < truth.batch; ++n) {
    s.psnr += psnr_image(a, truth, n);
    s.ssim += ssim_image(a, truth, n);
  }
  s.psnr /= static_cast<double>(truth.batch);
  s.ssim /= static_cast<double>(truth.batch);
  return s;
}

void check_input(const Model& model, const ImageBatch& input) {
  if (input.empty()) throw ContractError("no input images");
  if (input.channels != model.config.layout.input_channels) {
    throw DimensionError("images have " + std::to_string(input.channels) + " channels, model expects " +
                         std::to_string(model.config.layout.input_channels));
  }
}

}  // namespace

void EvalConfig::validate() const {
  if (steps == 0) throw ConfigError("eval.steps must be >= 1");
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("eval.sigma must lie in [0, 1]");
  if (!(converge_tol > 0.0)) throw ConfigError("eval.converge_tol must be > 0");
  if (converge_window == 0) throw ConfigError("eval.converge_window must be >= 1");
  if (!(divergence_bound > 0.0)) throw ConfigError("eval.divergence_bound must be > 0");
  if (pca_max_samples < 2) throw ConfigError("eval.pca_max_samples must be >= 2");
  if (batch == 0) throw ConfigError("eval.batch must be >= 1");
}

std::string metric_report_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "config,images,psnr,ssim,noisy_psnr,noisy_ssim,baseline_psnr,baseline_ssim\n";
  char buf[256];
  auto row = [&](const ConfigScore& s) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", s.config.c_str(), s.images, s.psnr,
                  s.ssim, s.noisy_psnr, s.noisy_ssim, s.baseline_psnr, s.baseline_ssim);
    out << buf;
  };
  for (const auto& s : report.per_config) row(s);
  row(report.aggregate);
  return out.str();
}

CellGrid prepare_grid(const ModelConfig& config, const ImageBatch& input) {
  NoGradGuard no_grad;
  return inject_input(seed_cells(config.layout, input.batch, input.height, input.width), input);
}

CellGrid run_inference(const Model& model, const CellGrid& grid, std::size_t steps, double sigma, Rng& rng,
                       const StepOptions& options) {
  PrecisionScope precision(model_precision(model));
  NoGradGuard no_grad;
  RolloutOptions ro;
  ro.step = options;
  return rollout(grid, model.params, model.config, steps, sigma, rng, ro).detached();
}

ImageBatch denoise(const Model& model, const ImageBatch& input, std::size_t steps, double sigma, Rng& rng,
                   const StepOptions& options) {
  check_input(model, input);
  PrecisionScope precision(model_precision(model));
  return clamped(output_image(run_inference(model, prepare_grid(model.config, input), steps, sigma, rng, options)));
}

MetricReport evaluate_denoising(const Model& model, const ImageBatch& test, NoiseKind noise, const EvalConfig& eval,
                                std::uint64_t seed) {
  eval.validate();
  check_input(model, test);
  const auto configs = curriculum_order(noise);
  MetricReport report;
  ConfigScore& all = report.aggregate;
  all.config = "all";
  const ImageBatch canvas(test.batch, test.channels, test.height, test.width, 0.5);
  const Scores base = mean_scores(canvas, test);

  for (std::size_t k = 0; k < configs.size(); ++k) {
    Rng mask_rng = stream(seed, 2 * k);
    Rng step_rng = stream(seed, 2 * k + 1);
    ConfigScore s;
    s.config = configs[k].to_string();
    for (std::size_t begin = 0; begin < test.batch; begin += eval.batch) {
      const ImageBatch truth = test.range(begin, std::min(test.batch, begin + eval.batch));
      const MaskedImages masked = apply_mask(truth, configs[k], mask_rng);
      const ImageBatch out = denoise(model, masked.masked, eval.steps, eval.sigma, step_rng);
      for (std::size_t n = 0; n < truth.batch; ++n) {
        s.psnr += psnr_image(out, truth, n);
        s.ssim += ssim_image(out, truth, n);
        s.noisy_psnr += psnr_image(masked.masked, truth, n);
        s.noisy_ssim += ssim_image(masked.masked, truth, n);
      }
      s.images += truth.batch;
    }
    const auto n = static_cast<double>(s.images);
    s.psnr /= n;
    s.ssim /= n;
    s.noisy_psnr /= n;
    s.noisy_ssim /= n;
    s.baseline_psnr = base.psnr;
    s.baseline_ssim = base.ssim;
    report.per_config.push_back(s);

    all.psnr += s.psnr;
    all.ssim += s.ssim;
    all.noisy_psnr += s.noisy_psnr;
    all.noisy_ssim += s.noisy_ssim;
    all.images += s.images;
  }
  const auto c = static_cast<double>(configs.size());
  all.psnr /= c;
  all.ssim /= c;
  all.noisy_psnr /= c;
  all.noisy_ssim /= c;
  all.baseline_psnr = base.psnr;
  all.baseline_ssim = base.ssim;
  report.psnr_db = all.psnr;
  report.ssim = all.ssim;
  return report;
}

CellGrid damage_cells(const CellGrid& grid, Rng& rng, std::vector<std::uint8_t>* damaged) {
  const auto& l = grid.layout;
  const std::size_t dh = grid.rows / 2, dw = grid.cols / 2, len = l.cell_length(), n = grid.cells();
  std::vector<double> values(grid.state.values().begin(), grid.state.values().end());
  if (damaged) damaged->assign(grid.batch * n, 0);
  for (std::size_t b = 0; b < grid.batch; ++b) {
    const auto y0 = static_cast<std::size_t>(rng.below(grid.rows - dh + 1));
    const auto x0 = static_cast<std::size_t>(rng.below(grid.cols - dw + 1));
    for (std::size_t y = y0; y < y0 + dh; ++y) {
      for (std::size_t x = x0; x < x0 + dw; ++x) {
        const std::size_t cell = b * n + y * grid.cols + x;
        double* base = values.data() + cell * len;
        for (std::size_t k = 0; k < l.output_length(); ++k) base[l.output_offset() + k] = rng.uniform(-1.0, 1.0);
        for (std::size_t k = 0; k < l.hidden_length(); ++k) base[l.hidden_offset() + k] = rng.uniform(-1.0, 1.0);
        if (damaged) (*damaged)[cell] = 1;
      }
    }
  }
  PrecisionScope precision(grid.state.precision());
  CellGrid out = grid;
  out.state = Tensor::from_values(grid.state.shape(), std::move(values));
  return out;
}

DamageResult damage_recovery(const Model& model, const ImageBatch& truth, const MaskConfig& mask,
                             std::size_t recovery_steps, const EvalConfig& eval, std::uint64_t seed) {
  eval.validate();
  check_input(model, truth);
  Rng mask_rng = stream(seed, 0), step_rng = stream(seed, 1), damage_rng = stream(seed, 2);
  const ImageBatch masked = apply_mask(truth, mask, mask_rng).masked;
  const CellGrid settled = run_inference(model, prepare_grid(model.config, masked), eval.steps, eval.sigma, step_rng);
  const CellGrid broken = damage_cells(settled, damage_rng);

  DamageResult r;
  r.damaged_psnr = mean_scores(clamped(output_image(broken)), truth).psnr;
  Rng branch = step_rng;
  r.undamaged_psnr =
      mean_scores(clamped(output_image(run_inference(model, settled, recovery_steps, eval.sigma, branch))), truth)
          .psnr;
  branch = step_rng;
  r.recovered_psnr =
      mean_scores(clamped(output_image(run_inference(model, broken, recovery_steps, eval.sigma, branch))), truth).psnr;
  return r;
}

std::size_t convergence_step(const std::vector<double>& drift, double tol, std::size_t window) {
  std::size_t run = 0;
  for (std::size_t t = 0; t < drift.size(); ++t) {
    run = drift[t] < tol ? run + 1 : 0;
    if (run == window) return t + 1 - window;
  }
  return kNeverConverged;
}

StabilityTrace stability_run(const Model& model, const CellGrid& grid, std::size_t steps, double sigma, Rng& rng,
                             const EvalConfig& eval) {
  PrecisionScope precision(model_precision(model));
  NoGradGuard no_grad;
  StabilityTrace trace;
  trace.drift.reserve(steps);
  const auto& l = grid.layout;
  CellGrid current = grid.detached();
  for (std::size_t t = 0; t < steps; ++t) {
    CellGrid next = apply_update_rule(current, model.params, model.config, sigma, rng).detached();
    trace.drift.push_back(output_drift(current, next));
    const auto v = next.state.values();
    for (std::size_t cell = 0; cell < next.batch * next.cells(); ++cell) {
      const std::size_t base = cell * l.cell_length();
      auto scan = [&](std::size_t offset, std::size_t length) {
        for (std::size_t k = 0; k < length; ++k) {
          const double a = std::fabs(v[base + offset + k]);
          if (!std::isfinite(a)) {
            trace.max_abs = a;
            trace.diverged = true;
          } else {
            trace.max_abs = std::max(trace.max_abs, a);
          }
        }
      };
      scan(l.output_offset(), l.output_length());
      scan(l.hidden_offset(), l.hidden_length());
    }
    if (!trace.diverged && trace.max_abs > eval.divergence_bound) trace.diverged = true;
    if (trace.diverged) {
      trace.diverged_at = t;
      break;
    }
    current = std::move(next);
  }
  trace.converged_at = convergence_step(trace.drift, eval.converge_tol, eval.converge_window);
  return trace;
}

std::vector<SweepPoint> update_rate_sweep(const Model& model, const ImageBatch& input,
                                          const std::vector<double>& sigmas, std::size_t max_steps,
                                          const EvalConfig& eval, std::uint64_t seed) {
  eval.validate();
  check_input(model, input);
  const CellGrid start = prepare_grid(model.config, input);
  std::vector<SweepPoint> out;
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    SweepPoint p;
    p.sigma = sigmas[k];
    if (sigmas[k] > 0.0) {
      Rng rng = stream(seed, k);
      EvalConfig quiet = eval;
      quiet.divergence_bound = std::numeric_limits<double>::infinity();
      const auto trace = stability_run(model, start, max_steps, sigmas[k], rng, quiet);
      p.iterations = trace.converged_at;
    } else if (sigmas[k] < 0.0) {
      throw ContractError("update rate must lie in [0, 1]");
    }
    out.push_back(p);
  }
  return out;
}

ImageBatch head_mask_rollout(const Model& model, const ImageBatch& input, const std::vector<std::size_t>& masked_heads,
                             std::size_t steps, double sigma, Rng& rng) {
  StepOptions options;
  options.head_mask.assign(model.config.heads, false);
  for (std::size_t h : masked_heads) {
    if (h >= model.config.heads) {
      throw IndexError("head index " + std::to_string(h) + " out of range for " + std::to_string(model.config.heads) +
                       " heads");
    }
    options.head_mask[h] = true;
  }
  return denoise(model, input, steps, sigma, rng, options);
}

ReinjectResult reinject_run(const Model& model, const ImageBatch& first, const ImageBatch& second,
                            const MaskConfig& mask, const EvalConfig& eval, std::uint64_t seed) {
  eval.validate();
  check_input(model, first);
  if (!first.same_shape(second)) throw DimensionError("reinject: the two image batches differ in shape");
  Rng mask_rng = stream(seed, 0), step_rng = stream(seed, 1);
  const ImageBatch a = apply_mask(first, mask, mask_rng).masked;
  const ImageBatch b = apply_mask(second, mask, mask_rng).masked;
  CellGrid grid = run_inference(model, prepare_grid(model.config, a), eval.steps, eval.sigma, step_rng);
  {
    NoGradGuard no_grad;
    grid = inject_input(grid, b);
  }
  grid = run_inference(model, grid, eval.steps, eval.sigma, step_rng);
  const ImageBatch out = clamped(output_image(grid));
  return {mean_scores(out, first).psnr, mean_scores(out, second).psnr};
}

ImageBatch spatial_interpolation_run(const Model& model, const ImageBatch& input, std::size_t target_h,
                                     std::size_t target_w, std::size_t steps, double sigma, Rng& rng) {
  check_input(model, input);
  const auto kind = model.config.layout.positional;
  const bool resized = target_h != input.height || target_w != input.width;
  if (resized && !positional_is_resolution_free(kind)) {
    throw ContractError(std::string("the ") + positional_name(kind) +
                        " positional encoding is tied to the trained cell count and cannot be used at " +
                        std::to_string(target_h) + "x" + std::to_string(target_w) + "; use none, xy, sincos5 or "
                        "sincos5xy for spatial interpolation");
  }
  const ImageBatch big = resized ? resample_images(input, target_h, target_w, Resample::nearest) : input;
  return denoise(model, big, steps, sigma, rng);
}

std::vector<double> converged_hidden_states(const Model& model, const ImageBatch& input, const EvalConfig& eval,
                                            std::uint64_t seed) {
  check_input(model, input);
  Rng rng = stream(seed, 0);
  std::vector<double> out;
  for (std::size_t begin = 0; begin < input.batch; begin += eval.batch) {
    const ImageBatch chunk = input.range(begin, std::min(input.batch, begin + eval.batch));
    const CellGrid grid = run_inference(model, prepare_grid(model.config, chunk), eval.steps, eval.sigma, rng);
    const auto& l = grid.layout;
    const auto v = grid.state.values();
    for (std::size_t cell = 0; cell < grid.batch * grid.cells(); ++cell) {
      const auto base = v.begin() + static_cast<std::ptrdiff_t>(cell * l.cell_length() + l.hidden_offset());
      out.insert(out.end(), base, base + static_cast<std::ptrdiff_t>(l.hidden_length()));
    }
  }
  return out;
}

PcaResult pca_hidden(const Model& model, const ImageBatch& input, std::size_t components, const EvalConfig& eval,
                     std::uint64_t seed) {
  const std::size_t samples = std::min(input.batch, eval.pca_max_samples);
  const ImageBatch capped = input.range(0, samples);
  const auto hidden = converged_hidden_states(model, capped, eval, seed);
  return pca(hidden, samples, hidden.size() / samples, components);
}

MedianResult median_analysis(const Model& model, const ImageBatch& reference, const ImageBatch& truth, NoiseKind noise,
                             const EvalConfig& eval, std::uint64_t seed) {
  eval.validate();
  check_input(model, truth);
  MedianResult r;
  r.median = pixelwise_median(reference);
  MaskConfig full;
  full.coverage = 1.0;
  full.kind = noise;
  Rng mask_rng = stream(seed, 0), step_rng = stream(seed, 1);
  const ImageBatch masked = apply_mask(truth, full, mask_rng).masked;
  r.outputs = denoise(model, masked, eval.steps, eval.sigma, step_rng);
  ImageBatch medians(truth.batch, truth.channels, truth.height, truth.width);
  for (std::size_t n = 0; n < truth.batch; ++n) {
    std::copy(r.median.values.begin(), r.median.values.end(), medians.image(n).begin());
  }
  r.psnr_to_median = mean_scores(r.outputs, medians).psnr;
  r.psnr_to_truth = mean_scores(r.outputs, truth).psnr;
  return r;
}

}  // namespace vitca
