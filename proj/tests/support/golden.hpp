#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vitca/dataset.hpp"
#include "vitca/trainer.hpp"

namespace vitca::testing {

inline constexpr std::uint64_t kGoldenSeed = 20240917;

struct GoldenSetup {
  ModelConfig model;
  TrainConfig train;
  ImageBatch data;
};

// Small enough to run 20 iterations in a couple of seconds.
inline GoldenSetup golden_setup() {
  GoldenSetup s;
  s.model.layout.hidden_channels = 8;
  s.model.embed_dim = 16;
  s.model.heads = 2;
  s.model.mlp_dim = 32;
  s.train.iterations = 20;
  s.train.batch = 4;
  s.train.t_min = 8;
  s.train.t_max = 12;
  s.train.pool_size = 16;
  s.train.curriculum_max_iteration = 20;
  s.data = synth_shapes(48, 8, 8, kGoldenSeed).images;
  return s;
}

// Deterministic part of a metrics row (drops wall times and peak bytes).
inline std::string golden_row(const IterationMetrics& m) {
  std::string row = metrics_csv_row(m);
  std::size_t comma = 0;
  for (int i = 0; i < 8; ++i) comma = row.find(',', comma + 1);
  return row.substr(0, comma);
}

inline std::string golden_header() {
  const std::string h = metrics_csv_header();
  std::size_t comma = 0;
  for (int i = 0; i < 8; ++i) comma = h.find(',', comma + 1);
  return h.substr(0, comma);
}

struct GoldenRun {
  std::vector<IterationMetrics> metrics;
  std::size_t max_pool = 0;
  std::string csv;
};

inline GoldenRun run_golden() {
  GoldenSetup s = golden_setup();
  Trainer trainer(s.model, s.train, s.data, kGoldenSeed);
  GoldenRun r;
  std::ostringstream csv;
  csv << golden_header() << '\n';
  while (!trainer.done()) {
    r.metrics.push_back(trainer.step());
    r.max_pool = std::max(r.max_pool, trainer.pool().size());
    csv << golden_row(r.metrics.back()) << '\n';
  }
  r.csv = csv.str();
  return r;
}

inline std::filesystem::path golden_path() { return std::filesystem::path(VITCA_GOLDEN_DIR) / "train20.csv"; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace vitca::testing
