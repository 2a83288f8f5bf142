#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vitca/images.hpp"
#include "vitca/rng.hpp"

namespace vitca {

enum class NoiseKind {
  dropout,   // corrupted pixels set to 0
  gaussian,  // N(0, 1) added, then clamped to [0, 1]
};

const char* noise_name(NoiseKind kind);
NoiseKind parse_noise(const std::string& text);

struct MaskConfig {
  std::size_t patch_h = 1;
  std::size_t patch_w = 1;
  double coverage = 0.25;  // fraction of image area
  NoiseKind kind = NoiseKind::dropout;

  // "PxP@NN%:kind", e.g. "2x2@50%:gaussian".
  std::string to_string() const;
  static MaskConfig parse(const std::string& text);

  bool operator==(const MaskConfig&) const = default;
};

// The nine curriculum configurations in unlock order: patch 1, 2, 4 (outer),
// coverage 25, 50, 75% (inner).
std::vector<MaskConfig> curriculum_order(NoiseKind kind = NoiseKind::dropout);

// Config k unlocks at ceil(max_iteration * (2^k - 1) / (2^8 - 1)): the gaps
// double from one stage to the next and the last one lands on max_iteration.
class CurriculumSchedule {
 public:
  explicit CurriculumSchedule(std::size_t max_iteration = 10000, NoiseKind kind = NoiseKind::dropout);

  std::size_t max_iteration() const { return max_iteration_; }
  const std::vector<MaskConfig>& configs() const { return configs_; }
  const std::vector<std::size_t>& unlock_iterations() const { return unlocks_; }
  std::size_t available_count(std::size_t iteration) const;
  std::vector<MaskConfig> available(std::size_t iteration) const;

 private:
  std::size_t max_iteration_;
  std::vector<MaskConfig> configs_;
  std::vector<std::size_t> unlocks_;
};

struct MaskedImages {
  ImageBatch masked;
  // One byte per pixel, [B][H][W]; 1 where the pixel was corrupted.
  std::vector<std::uint8_t> mask;
};

// Corrupts round(coverage * patches) patches chosen uniformly without
// replacement from the origin-aligned patch tiling, independently per image.
MaskedImages apply_mask(const ImageBatch& images, const MaskConfig& config, Rng& rng);
// One config per image.
MaskedImages apply_masks(const ImageBatch& images, std::span<const MaskConfig> configs, Rng& rng);

}  // namespace vitca
