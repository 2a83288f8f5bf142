#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vitca/serialization.hpp"
#include "vitca/tensor.hpp"

namespace vitca {

using ParamList = std::vector<std::pair<std::string, Tensor*>>;

inline constexpr double kGradNormGuard = 1e-8;

// g <- g / (||g||_F + 1e-8) for each parameter separately. Parameters without
// a gradient buffer are left alone.
void normalize_gradients(const ParamList& params);

// eta * (1 + cos(pi * i / total)) / 2.
double cosine_lr(std::size_t i, std::size_t total, double eta);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

// Decoupled weight decay Adam. Parameters with no gradient buffer are skipped
// entirely, as if absent from the step.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(const ParamList& params, double lr);

  const AdamWConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  // Moments as "adam.m.<name>" / "adam.v.<name>" (f64) plus "adam.step".
  std::vector<NamedTensor> export_state() const;
  void import_state(const std::vector<NamedTensor>& tensors);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace vitca
