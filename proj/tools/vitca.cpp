// vitca: train, evaluate, analyze and benchmark cellular-automaton denoisers.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vitca/config.hpp"
#include "vitca/dataset.hpp"
#include "vitca/errors.hpp"
#include "vitca/evaluation.hpp"
#include "vitca/metrics.hpp"
#include "vitca/pca.hpp"
#include "vitca/pnm.hpp"
#include "vitca/probe.hpp"
#include "vitca/profiling.hpp"
#include "vitca/run_dir.hpp"
#include "vitca/runtime.hpp"
#include "vitca/serialization.hpp"
#include "vitca/trainer.hpp"

namespace {

using namespace vitca;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

// Options every command shares: config file, dotted overrides, trained run.
struct Common {
  std::string config_path;
  std::string run;         // directory holding config.yaml and model.bin
  std::string model_path;  // explicit model.bin
  std::map<std::string, std::string> overrides;

  RunConfig config() const {
    RunConfig c;
    if (!config_path.empty()) {
      c = load_config(config_path);
    } else if (!run.empty() && std::filesystem::exists(std::filesystem::path(run) / "config.yaml")) {
      c = load_config(std::filesystem::path(run) / "config.yaml");
      c.output_dir.clear();
    }
    std::vector<std::pair<std::string, std::string>> list(overrides.begin(), overrides.end());
    return list.empty() ? c : apply_overrides(c, list);
  }

  Model model(const RunConfig& c) const {
    std::filesystem::path path = model_path;
    if (path.empty()) {
      if (run.empty()) throw ConfigError("this command needs --run DIR or --model FILE");
      path = std::filesystem::path(run) / "model.bin";
    }
    Model m = load_model(path);
    m.config.backend = c.model.backend;
    return m;
  }
};

void add_common(CLI::App* app, Common& common, bool needs_model) {
  app->add_option("--config", common.config_path, "YAML run configuration")->check(CLI::ExistingFile);
  if (needs_model) {
    app->add_option("--run", common.run, "Training run directory (config.yaml + model.bin)")->check(CLI::ExistingDirectory);
    app->add_option("--model", common.model_path, "Model file written by train")->check(CLI::ExistingFile);
  }
  auto* group = app->add_option_group("config", "Overrides, one flag per configuration key");
  for (const std::string& key : config_keys()) {
    group->add_option_function<std::string>(
        "--" + key, [&common, key](const std::string& v) { common.overrides[key] = v; }, "Sets " + key);
  }
}

NoiseKind noise_for(const RunConfig& c) {
  if (c.train.noise) return *c.train.noise;
  return c.model.layout.input_channels > 1 ? NoiseKind::dropout : NoiseKind::gaussian;
}

MaskConfig mask_for(const std::string& text, const RunConfig& c) {
  if (!text.empty()) return MaskConfig::parse(text);
  MaskConfig m;
  m.patch_h = m.patch_w = 2;
  m.coverage = 0.5;
  m.kind = noise_for(c);
  return m;
}

// The whole test split, or only its first eval.batch images.
ImageBatch test_images(const RunConfig& c, bool all) {
  const DatasetSplit split = load_data(c.data, c.seed);
  if (split.test.size() == 0) throw DataError("the test split is empty");
  return all ? split.test.images : split.test.images.range(0, std::min(split.test.size(), c.eval.batch));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cmd_train(const Common& common, const std::string& resume, bool quiet) {
  const RunConfig c = common.config();
  const DatasetSplit data = load_data(c.data, c.seed);
  RunDir dir = RunDir::create("train", c);
  Trainer trainer(c.model, c.train, data.train.images, c.seed);
  if (!resume.empty()) trainer.load_checkpoint(resume);
  std::ofstream csv(dir.file("metrics.csv"), std::ios::trunc);
  csv << metrics_csv_header() << '\n';
  try {
    while (!trainer.done()) {
      const IterationMetrics m = trainer.step();
      csv << metrics_csv_row(m) << '\n';
      if (!quiet && (m.iteration % 100 == 0 || m.iteration == 1)) {
        std::printf("iter %zu  loss %.6f  rec %.6f  T %zu  pool %zu\n", m.iteration, m.loss, m.rec, m.steps,
                    m.pool_size);
        std::fflush(stdout);
      }
      if (c.train.checkpoint_every && m.iteration % c.train.checkpoint_every == 0) {
        trainer.save_checkpoint(dir.path() / "checkpoint");
      }
    }
  } catch (const DivergenceError&) {
    csv.flush();
    dir.write_manifest();
    throw;
  }
  csv.close();
  trainer.save_checkpoint(dir.file("checkpoint"));
  save_model(dir.file("model.bin"), trainer.model_config(), trainer.params());
  dir.file("model.bin.json");
  dir.write_manifest();
  std::printf("%s\n", dir.path().string().c_str());
  return kOk;
}

int cmd_denoise(const Common& common, const std::string& input, const std::string& mask_text, std::size_t cols) {
  const RunConfig c = common.config();
  const Model model = common.model(c);
  ImageBatch images;
  if (input.empty()) {
    images = test_images(c, false);
  } else if (input.ends_with(".pgm") || input.ends_with(".ppm")) {
    images = read_pnm(input);
  } else {
    images = load_idx(input, {}, c.data.height, c.data.width, c.data.resample).images;
  }
  Rng rng(c.seed);
  const ImageBatch masked = mask_text == "none" ? images : apply_mask(images, mask_for(mask_text, c), rng).masked;
  const ImageBatch out = denoise(model, masked, c.eval.steps, c.eval.sigma, rng);
  RunDir dir = RunDir::create("denoise", c);
  write_image_grid(masked, cols, dir.file("input.pgm"));
  write_image_grid(out, cols, dir.file("output.pgm"));
  std::ostringstream csv;
  csv << "image,psnr_input,psnr_output\n";
  for (std::size_t n = 0; n < images.batch; ++n) {
    csv << n << ',' << fmt("%.4f", psnr_image(masked, images, n)) << ',' << fmt("%.4f", psnr_image(out, images, n))
        << '\n';
  }
  dir.write_text("denoise.csv", csv.str());
  dir.write_manifest();
  std::printf("%s\n", dir.path().string().c_str());
  return kOk;
}

int cmd_evaluate(const Common& common) {
  const RunConfig c = common.config();
  const Model model = common.model(c);
  const ImageBatch test = test_images(c, true);
  const MetricReport report = evaluate_denoising(model, test, noise_for(c), c.eval, c.seed);
  RunDir dir = RunDir::create("evaluate", c);
  const std::string csv = metric_report_csv(report);
  dir.write_text("report.csv", csv);
  dir.write_manifest();
  std::cout << csv;
  return kOk;
}

int cmd_probe(const Common& common) {
  const RunConfig c = common.config();
  const Model model = common.model(c);
  const DatasetSplit data = load_data(c.data, c.seed);
  const ProbeResult hidden = linear_probe(model, data.train, data.test, c.probe, c.eval, c.seed);
  const ProbeResult pixels = pixel_probe(data.train, data.test, c.probe, c.seed);
  std::ostringstream csv;
  csv << "features,train_accuracy,test_accuracy,parameters\n";
  csv << "hidden," << fmt("%.4f", hidden.train_accuracy) << ',' << fmt("%.4f", hidden.test_accuracy) << ','
      << hidden.parameter_count << '\n';
  csv << "pixels," << fmt("%.4f", pixels.train_accuracy) << ',' << fmt("%.4f", pixels.test_accuracy) << ','
      << pixels.parameter_count << '\n';
  RunDir dir = RunDir::create("probe", c);
  dir.write_text("probe.csv", csv.str());
  dir.write_manifest();
  std::cout << csv.str();
  return kOk;
}

struct AnalyzeOptions {
  std::string kind;
  std::string mask;
  std::vector<double> sigmas = {0.0, 0.25, 0.5, 1.0};
  std::size_t max_steps = 256;
  std::vector<std::size_t> heads = {0};
  std::size_t target = 0;
  std::size_t recovery_steps = 64;
  std::size_t components = 3;
};

int cmd_analyze(const Common& common, const AnalyzeOptions& a) {
  const RunConfig c = common.config();
  const Model model = common.model(c);
  RunDir dir = RunDir::create("analyze-" + a.kind, c);
  std::ostringstream csv;
  const std::size_t cols = 8;

  if (a.kind == "damage") {
    const DamageResult r = damage_recovery(model, test_images(c, false), mask_for(a.mask, c), a.recovery_steps,
                                           c.eval, c.seed);
    csv << "undamaged_psnr,damaged_psnr,recovered_psnr\n"
        << fmt("%.4f", r.undamaged_psnr) << ',' << fmt("%.4f", r.damaged_psnr) << ','
        << fmt("%.4f", r.recovered_psnr) << '\n';
  } else if (a.kind == "stability") {
    const ImageBatch truth = test_images(c, false);
    Rng rng(c.seed);
    const ImageBatch masked = apply_mask(truth, mask_for(a.mask, c), rng).masked;
    const StabilityTrace t =
        stability_run(model, prepare_grid(model.config, masked), c.eval.stability_steps, c.eval.sigma, rng, c.eval);
    csv << "step,drift\n";
    for (std::size_t i = 0; i < t.drift.size(); ++i) csv << i << ',' << fmt("%.6e", t.drift[i]) << '\n';
    std::printf("diverged %d  converged_at %s  max_abs %.4f\n", t.diverged ? 1 : 0,
                t.converged_at == kNeverConverged ? "never" : std::to_string(t.converged_at).c_str(), t.max_abs);
    if (t.diverged) {
      dir.write_text("stability.csv", csv.str());
      dir.write_manifest();
      throw DivergenceError("cell values left +-" + fmt("%g", c.eval.divergence_bound) + " at step " +
                            std::to_string(t.diverged_at));
    }
  } else if (a.kind == "sigma-sweep") {
    const ImageBatch truth = test_images(c, false);
    Rng rng(c.seed);
    const ImageBatch masked = apply_mask(truth, mask_for(a.mask, c), rng).masked;
    csv << "sigma,iterations\n";
    for (const SweepPoint& p : update_rate_sweep(model, masked, a.sigmas, a.max_steps, c.eval, c.seed)) {
      csv << fmt("%g", p.sigma) << ',' << (p.iterations == kNeverConverged ? "never" : std::to_string(p.iterations))
          << '\n';
    }
  } else if (a.kind == "head-mask") {
    const ImageBatch truth = test_images(c, false);
    Rng mask_rng(c.seed);
    const ImageBatch masked = apply_mask(truth, mask_for(a.mask, c), mask_rng).masked;
    Rng r1(c.seed + 1), r2(c.seed + 1);
    const ImageBatch normal = denoise(model, masked, c.eval.steps, c.eval.sigma, r1);
    const ImageBatch silenced = head_mask_rollout(model, masked, a.heads, c.eval.steps, c.eval.sigma, r2);
    double pn = 0, ps = 0;
    for (std::size_t n = 0; n < truth.batch; ++n) {
      pn += psnr_image(normal, truth, n) / static_cast<double>(truth.batch);
      ps += psnr_image(silenced, truth, n) / static_cast<double>(truth.batch);
    }
    csv << "psnr_all_heads,psnr_masked_heads\n" << fmt("%.4f", pn) << ',' << fmt("%.4f", ps) << '\n';
    write_image_grid(silenced, cols, dir.file("masked_heads.pgm"));
  } else if (a.kind == "reinject") {
    const ImageBatch truth = test_images(c, false);
    if (truth.batch < 2) throw DataError("reinject needs at least two test images");
    const std::size_t half = truth.batch / 2;
    const ReinjectResult r = reinject_run(model, truth.range(0, half), truth.range(half, 2 * half), mask_for(a.mask, c),
                                          c.eval, c.seed);
    csv << "psnr_vs_first,psnr_vs_second\n"
        << fmt("%.4f", r.psnr_vs_first) << ',' << fmt("%.4f", r.psnr_vs_second) << '\n';
  } else if (a.kind == "interp") {
    const ImageBatch truth = test_images(c, false);
    const std::size_t target = a.target ? a.target : 2 * truth.height;
    Rng rng(c.seed);
    const ImageBatch out = spatial_interpolation_run(model, truth, target, target, c.eval.steps, c.eval.sigma, rng);
    const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
    csv << "height,width,min,max\n" << target << ',' << target << ',' << fmt("%.4f", *lo) << ',' << fmt("%.4f", *hi)
        << '\n';
    write_image_grid(out, cols, dir.file("interp.pgm"));
  } else if (a.kind == "pca") {
    const DatasetSplit data = load_data(c.data, c.seed);
    const PcaResult r = pca_hidden(model, data.test.images, a.components, c.eval, c.seed);
    std::vector<int> labels;
    if (!data.test.labels.empty()) labels.assign(data.test.labels.begin(), data.test.labels.begin() + r.samples);
    write_pca_csv(dir.file("projections.csv"), r, labels);
    csv << "component,variance,explained\n";
    for (std::size_t k = 0; k < r.components; ++k) {
      csv << k + 1 << ',' << fmt("%.6e", r.variances[k]) << ',' << fmt("%.6f", r.explained[k]) << '\n';
    }
    if (r.degenerate) std::printf("hidden states span fewer than %zu dimensions\n", a.components);
  } else if (a.kind == "median") {
    const DatasetSplit data = load_data(c.data, c.seed);
    const MedianResult r = median_analysis(model, data.train.images, test_images(c, false), noise_for(c), c.eval,
                                           c.seed);
    csv << "psnr_to_median,psnr_to_truth\n"
        << fmt("%.4f", r.psnr_to_median) << ',' << fmt("%.4f", r.psnr_to_truth) << '\n';
    write_image_grid(r.median, 1, dir.file("median.pgm"));
    write_image_grid(r.outputs, cols, dir.file("outputs.pgm"));
  } else {
    throw ConfigError("unknown analysis '" + a.kind + "'");
  }
  dir.write_text(a.kind + ".csv", csv.str());
  dir.write_manifest();
  std::cout << csv.str();
  return kOk;
}

int cmd_bench_attn(const AttentionBenchConfig& b) {
  const auto rows = bench_attention(b);
  const std::string csv = attention_bench_csv(rows);
  RunConfig c;
  c.seed = b.seed;
  RunDir dir = RunDir::create("bench-attn", c);
  dir.write_text("bench_attn.csv", csv);
  dir.write_manifest();
  std::cout << csv;
  return kOk;
}

int cmd_bench_memory(const Common& common, MemoryBenchConfig b) {
  const RunConfig c = common.config();
  b.model = c.model;
  b.seed = c.seed;
  b.sigma = c.train.sigma;
  if (b.height == 0) b.height = c.data.height;
  if (b.width == 0) b.width = c.data.width;
  const MemoryBenchResult r = bench_memory(b);
  const std::string csv = memory_bench_csv(r);
  RunDir dir = RunDir::create("bench-memory", c);
  dir.write_text("bench_memory.csv", csv);
  dir.write_manifest();
  std::cout << csv;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  vitca::configure_allocator();
  CLI::App app{"Attention-based neural cellular automata: training, evaluation and analysis"};
  app.require_subcommand(1);

  Common train_c, denoise_c, eval_c, probe_c, analyze_c, memory_c;
  std::string resume, input, mask;
  bool quiet = false;
  std::size_t cols = 8;
  AnalyzeOptions analyze;
  AttentionBenchConfig attn;
  MemoryBenchConfig memory;
  memory.height = memory.width = 0;

  auto* train = app.add_subcommand("train", "Run the pool-sampling training loop");
  add_common(train, train_c, false);
  train->add_option("--resume", resume, "Checkpoint directory to continue from")->check(CLI::ExistingDirectory);
  train->add_flag("--quiet", quiet, "No progress lines");
  train->add_option_function<std::string>(
      "--rollout", [&](const std::string& v) { train_c.overrides["train.rollout"] = v; },
      "Shorthand for --train.rollout (plain, checkpointed, fusion-mitosis)");

  auto* den = app.add_subcommand("denoise", "Reconstruct masked images with a trained model");
  add_common(den, denoise_c, true);
  den->add_option("--input", input, "PGM/PPM or IDX images (default: test split)");
  den->add_option("--mask", mask, "Mask such as 2x2@50%:gaussian, or none");
  den->add_option("--cols", cols, "Images per row in the output grid");

  auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM over every mask configuration");
  add_common(ev, eval_c, true);

  auto* pr = app.add_subcommand("probe", "Linear probe on converged hidden states vs raw pixels");
  add_common(pr, probe_c, true);

  auto* an = app.add_subcommand("analyze", "Cell-state and inductive-bias analyses");
  add_common(an, analyze_c, true);
  an->add_option("kind", analyze.kind, "damage|stability|sigma-sweep|head-mask|reinject|interp|pca|median")
      ->required()
      ->check(CLI::IsMember({"damage", "stability", "sigma-sweep", "head-mask", "reinject", "interp", "pca", "median"}));
  an->add_option("--mask", analyze.mask, "Mask configuration for the corrupted inputs");
  an->add_option("--sigmas", analyze.sigmas, "Update rates for sigma-sweep")->delimiter(',');
  an->add_option("--max-steps", analyze.max_steps, "Step budget for sigma-sweep");
  an->add_option("--heads", analyze.heads, "Heads to silence for head-mask")->delimiter(',');
  an->add_option("--target", analyze.target, "Square output size for interp (default 2x)");
  an->add_option("--recovery-steps", analyze.recovery_steps, "Updates after damage");
  an->add_option("--components", analyze.components, "PCA components");

  auto* ba = app.add_subcommand("bench-attn", "Time localized vs masked-global attention");
  ba->add_option("--sizes", attn.sizes, "Cell counts (perfect squares)")->delimiter(',');
  ba->add_option("--dim", attn.dim, "Embedding width");
  ba->add_option("--heads", attn.heads, "Attention heads");
  ba->add_option("--window", attn.window, "Odd neighbourhood extent");
  ba->add_option("--repeats", attn.repeats, "Timing repeats (best is kept)");
  ba->add_option("--seed", attn.seed, "Input seed");

  auto* bm = app.add_subcommand("bench-memory", "Peak tensor bytes and times, plain vs checkpointed");
  add_common(bm, memory_c, false);
  bm->add_option("--steps", memory.steps, "Rollout length T");
  bm->add_option("--segments", memory.segments, "Checkpoint segments");
  bm->add_option("--batch", memory.batch, "Batch size");
  bm->add_option("--height", memory.height, "Image height (default data.height)");
  bm->add_option("--width", memory.width, "Image width (default data.width)");
  bm->add_option("--repeats", memory.repeats, "Timing repeats");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_c, resume, quiet);
    if (*den) return cmd_denoise(denoise_c, input, mask, cols);
    if (*ev) return cmd_evaluate(eval_c);
    if (*pr) return cmd_probe(probe_c);
    if (*an) return cmd_analyze(analyze_c, analyze);
    if (*ba) return cmd_bench_attn(attn);
    if (*bm) return cmd_bench_memory(memory_c, memory);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "vitca: numeric divergence: %s\n", e.what());
    return kDivergence;
  } catch (const DataError& e) {
    std::fprintf(stderr, "vitca: data error: %s\n", e.what());
    return kData;
  } catch (const Error& e) {
    std::fprintf(stderr, "vitca: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "vitca: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
