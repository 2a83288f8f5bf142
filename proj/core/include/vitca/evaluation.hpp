#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "vitca/cell_grid.hpp"
#include "vitca/corruption.hpp"
#include "vitca/images.hpp"
#include "vitca/pca.hpp"
#include "vitca/rng.hpp"
#include "vitca/update_rule.hpp"

namespace vitca {

// Iteration count reported when a run never meets the convergence test.
inline constexpr std::size_t kNeverConverged = std::numeric_limits<std::size_t>::max();

struct EvalConfig {
  std::size_t steps = 64;
  double sigma = 0.5;
  std::size_t stability_steps = 2784;
  // Converged: max per-cell output change below tol for `window` straight steps.
  double converge_tol = 1e-3;
  std::size_t converge_window = 8;
  // Diverged: any cell value beyond +-bound, or non-finite.
  double divergence_bound = 10.0;
  std::size_t pca_max_samples = 10000;
  std::size_t batch = 32;

  void validate() const;

  bool operator==(const EvalConfig&) const = default;
};

struct ConfigScore {
  std::string config;  // MaskConfig text form, or "all"
  double psnr = 0.0;
  double ssim = 0.0;
  double noisy_psnr = 0.0;     // masked input vs truth
  double noisy_ssim = 0.0;
  double baseline_psnr = 0.0;  // constant 0.5 canvas vs truth
  double baseline_ssim = 0.0;
  std::size_t images = 0;
};

// Means of per-image scores. An image reconstructed exactly scores +inf PSNR.
struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  ConfigScore aggregate;
  std::vector<ConfigScore> per_config;
};

std::string metric_report_csv(const MetricReport& report);

// Seeded grid with `input` injected.
CellGrid prepare_grid(const ModelConfig& config, const ImageBatch& input);

// No-grad rollout of `steps` updates from a prepared grid.
CellGrid run_inference(const Model& model, const CellGrid& grid, std::size_t steps, double sigma, Rng& rng,
                       const StepOptions& options = {});

// Output images for `input` after `steps` updates, clamped to [0, 1].
ImageBatch denoise(const Model& model, const ImageBatch& input, std::size_t steps, double sigma, Rng& rng,
                   const StepOptions& options = {});

// Every curriculum config in unlock order, each on the whole test set with
// its own seeded mask stream.
MetricReport evaluate_denoising(const Model& model, const ImageBatch& test, NoiseKind noise, const EvalConfig& eval,
                                std::uint64_t seed);

// Overwrites the output and hidden slabs of one random contiguous
// (rows/2 x cols/2) block per batch item with U(-1, 1) draws. When `damaged`
// is given it receives one flag per cell ([B][N]).
CellGrid damage_cells(const CellGrid& grid, Rng& rng, std::vector<std::uint8_t>* damaged = nullptr);

struct DamageResult {
  double undamaged_psnr = 0.0;
  double damaged_psnr = 0.0;    // right after damage
  double recovered_psnr = 0.0;  // after `recovery_steps` further updates
};

// Converges on masked inputs for eval.steps, then continues for
// recovery_steps both with and without damage (same random stream).
DamageResult damage_recovery(const Model& model, const ImageBatch& truth, const MaskConfig& mask,
                             std::size_t recovery_steps, const EvalConfig& eval, std::uint64_t seed);

struct StabilityTrace {
  std::vector<double> drift;  // max |change| of the output slab per step
  bool diverged = false;
  std::size_t diverged_at = kNeverConverged;
  std::size_t converged_at = kNeverConverged;
  double max_abs = 0.0;  // largest |value| over the output and hidden slabs
};

StabilityTrace stability_run(const Model& model, const CellGrid& grid, std::size_t steps, double sigma, Rng& rng,
                             const EvalConfig& eval);

// First step t (0-based) after which converge_window consecutive updates all
// move the output by less than tol; kNeverConverged otherwise.
std::size_t convergence_step(const std::vector<double>& drift, double tol, std::size_t window);

struct SweepPoint {
  double sigma = 0.0;
  std::size_t iterations = kNeverConverged;
};

// Iterations to converge for each sigma, rolling out for at most max_steps.
// sigma = 0 never changes the seed and reports kNeverConverged.
std::vector<SweepPoint> update_rate_sweep(const Model& model, const ImageBatch& input,
                                          const std::vector<double>& sigmas, std::size_t max_steps,
                                          const EvalConfig& eval, std::uint64_t seed);

// Rollout with the listed heads silenced. Every index must be below the head
// count (IndexError otherwise).
ImageBatch head_mask_rollout(const Model& model, const ImageBatch& input, const std::vector<std::size_t>& masked_heads,
                             std::size_t steps, double sigma, Rng& rng);

struct ReinjectResult {
  double psnr_vs_first = 0.0;
  double psnr_vs_second = 0.0;
};

// Injects masked `first`, converges, injects masked `second` into the same
// cells, converges again, then scores the output against both truths.
ReinjectResult reinject_run(const Model& model, const ImageBatch& first, const ImageBatch& second,
                            const MaskConfig& mask, const EvalConfig& eval, std::uint64_t seed);

// Nearest-upsamples `input` (at the trained resolution) to target_h x
// target_w and rolls out on a grid of that size with positional channels
// recomputed. Encodings tied to a cell count (handcrafted, learned) are
// rejected when the target differs from the trained size.
ImageBatch spatial_interpolation_run(const Model& model, const ImageBatch& input, std::size_t target_h,
                                     std::size_t target_w, std::size_t steps, double sigma, Rng& rng);

// Flattened hidden slabs ([B, N*C_h]) after converging on clean inputs.
std::vector<double> converged_hidden_states(const Model& model, const ImageBatch& input, const EvalConfig& eval,
                                            std::uint64_t seed);

// PCA over at most eval.pca_max_samples converged hidden states.
PcaResult pca_hidden(const Model& model, const ImageBatch& input, std::size_t components, const EvalConfig& eval,
                     std::uint64_t seed);

struct MedianResult {
  ImageBatch median;        // pixelwise median of the reference set
  ImageBatch outputs;       // fully masked reconstructions
  double psnr_to_median = 0.0;
  double psnr_to_truth = 0.0;
};

// Rolls out on completely masked inputs and compares the outputs with the
// pixelwise median of `reference`.
MedianResult median_analysis(const Model& model, const ImageBatch& reference, const ImageBatch& truth, NoiseKind noise,
                             const EvalConfig& eval, std::uint64_t seed);

}  // namespace vitca
