#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vitca/dataset.hpp"
#include "vitca/evaluation.hpp"
#include "vitca/update_rule.hpp"

namespace vitca {

struct ProbeConfig {
  std::size_t epochs = 30;
  double lr = 1e-2;
  std::size_t batch = 64;
  double weight_decay = 1e-4;

  void validate() const;

  bool operator==(const ProbeConfig&) const = default;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t parameter_count = 0;
};

// Weights (features x classes) plus one bias per class.
constexpr std::size_t probe_parameter_count(std::size_t features, std::size_t classes) {
  return features * classes + classes;
}

// Softmax linear classifier on row-major feature matrices. Features are
// standardized with the training mean and deviation; training uses AdamW on
// shuffled minibatches. Throws ContractError when a label count does not match
// its sample count.
ProbeResult train_linear_classifier(const std::vector<double>& train_x, const std::vector<int>& train_y,
                                    const std::vector<double>& test_x, const std::vector<int>& test_y,
                                    std::size_t features, std::size_t classes, const ProbeConfig& config,
                                    std::uint64_t seed);

// Probe on converged hidden states of clean inputs (C_h * N features). The
// model's parameters are only read.
ProbeResult linear_probe(const Model& model, const Dataset& train, const Dataset& test, const ProbeConfig& config,
                         const EvalConfig& eval, std::uint64_t seed);

// The same classifier on raw pixels.
ProbeResult pixel_probe(const Dataset& train, const Dataset& test, const ProbeConfig& config, std::uint64_t seed);

}  // namespace vitca
