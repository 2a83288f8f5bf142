#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vitca/dataset.hpp"
#include "vitca/evaluation.hpp"
#include "vitca/probe.hpp"
#include "vitca/trainer.hpp"
#include "vitca/update_rule.hpp"

namespace vitca {

enum class DataSource { synthetic, idx };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  // IDX files; an empty test path splits test_fraction off the training file.
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t synthetic_count = 2000;
  std::size_t height = 32;
  std::size_t width = 32;
  Resample resample = Resample::pad;
  double val_fraction = 0.0;
  double test_fraction = 0.1;

  void validate() const;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  ProbeConfig probe;
  DataConfig data;
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: a fresh directory under the run root

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// YAML document with optional sections seed, output_dir, model, train, eval,
// probe and data. Missing keys take their defaults; unknown keys, wrong types
// and out-of-range values throw ConfigError naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every key, in a stable order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

// Sets dotted paths such as "model.heads" to the given scalar text and
// re-validates the whole document.
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::pair<std::string, std::string>>& overrides);

// Every dotted key accepted by parse_config.
std::vector<std::string> config_keys();

// Loads or synthesizes the corpus described by `data`, resampled to its
// height and width, split deterministically under `seed`.
DatasetSplit load_data(const DataConfig& data, std::uint64_t seed);

}  // namespace vitca
