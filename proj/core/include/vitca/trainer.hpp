#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "vitca/corruption.hpp"
#include "vitca/images.hpp"
#include "vitca/optimizer.hpp"
#include "vitca/rng.hpp"
#include "vitca/rollout.hpp"
#include "vitca/sample_pool.hpp"
#include "vitca/update_rule.hpp"

namespace vitca {

struct TrainConfig {
  std::size_t iterations = 100000;
  std::size_t batch = 32;
  double sigma = 0.5;
  std::size_t t_min = 8;
  std::size_t t_max = 32;
  double lr = 1e-3;
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t pool_size = 1024;
  AdamWConfig adam;
  RolloutMode rollout = RolloutMode::plain;
  std::size_t checkpoint_segments = 0;  // 0: floor(T / 2)
  std::size_t fusion_pre = 2;
  std::size_t fusion_post = 2;
  std::size_t curriculum_max_iteration = 10000;
  // Unset: dropout for multi-channel images, gaussian for single-channel.
  std::optional<NoiseKind> noise;
  Precision precision = Precision::f32;
  // Save a resumable checkpoint every this many iterations (0: never).
  std::size_t checkpoint_every = 0;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct IterationMetrics {
  std::size_t iteration = 0;
  double lr = 0.0;
  std::size_t steps = 0;
  double loss = 0.0;
  double rec = 0.0;
  double output_overflow = 0.0;
  double hidden_overflow = 0.0;
  std::size_t pool_size = 0;
  double wall_ms_forward = 0.0;
  double wall_ms_backward = 0.0;
  std::int64_t peak_bytes = 0;
  bool from_pool = false;
};

std::string metrics_csv_header();
// Reals printed with 17 significant digits so rows round-trip exactly.
std::string metrics_csv_row(const IterationMetrics& m);

// Pool-sampling trainer. Iterations are numbered from 1; on an even
// iteration with more than `batch` pooled grids the batch is the pool's first
// `batch` entries, otherwise fresh grids are seeded and curriculum-masked
// inputs injected.
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, ImageBatch dataset, std::uint64_t seed);

  // Runs the next iteration.
  IterationMetrics step();
  std::size_t iteration() const { return iteration_; }
  bool done() const { return iteration_ >= train_.iterations; }

  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  const UpdateRuleParams& params() const { return params_; }
  UpdateRuleParams& params() { return params_; }
  const SamplePool& pool() const { return pool_; }
  const AdamW& optimizer() const { return optimizer_; }
  const Rng& rng() const { return rng_; }
  NoiseKind noise_kind() const;

  // Directory with model.bin (+ sidecar), state.bin and state.json.
  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

 private:
  ModelConfig model_;
  TrainConfig train_;
  ImageBatch dataset_;
  Rng rng_;
  UpdateRuleParams params_;
  AdamW optimizer_;
  SamplePool pool_;
  CurriculumSchedule curriculum_;
  std::size_t iteration_ = 0;
};

}  // namespace vitca
