#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vitca/update_rule.hpp"

namespace vitca {

struct AttentionBenchConfig {
  // Cell counts; each must be a perfect square (square grids).
  std::vector<std::size_t> sizes = {256, 1024, 4096};
  std::size_t dim = 64;
  std::size_t heads = 1;
  std::size_t window = 3;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

struct AttentionBenchRow {
  std::size_t cells = 0;
  std::string kernel;  // "local" or "global"
  double forward_ms = 0.0;
  double backward_ms = 0.0;
  double total_ms = 0.0;
  // Largest output/gradient difference against the other kernel.
  double max_abs_diff = 0.0;
};

// Forward + backward wall time (best of `repeats`) of both attention kernels
// at every size. Throws ContractError if the kernels disagree by more than
// 1e-5 before anything is timed.
std::vector<AttentionBenchRow> bench_attention(const AttentionBenchConfig& config);
std::string attention_bench_csv(const std::vector<AttentionBenchRow>& rows);

struct MemoryBenchConfig {
  ModelConfig model;
  std::size_t steps = 32;
  std::size_t segments = 16;
  std::size_t batch = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  double sigma = 0.5;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
};

struct MemoryBenchRow {
  std::string mode;  // "plain" or "checkpointed"
  double forward_ms = 0.0;
  double backward_ms = 0.0;
  // Peak tracked tensor bytes above the pre-forward level.
  std::int64_t peak_bytes = 0;
};

struct MemoryBenchResult {
  std::vector<MemoryBenchRow> rows;
  bool forward_identical = false;  // output grids bit-identical across modes
};

// One training-style forward (rollout + loss) and backward per mode with the
// same parameters, inputs and random stream.
MemoryBenchResult bench_memory(const MemoryBenchConfig& config);
std::string memory_bench_csv(const MemoryBenchResult& result);

}  // namespace vitca
