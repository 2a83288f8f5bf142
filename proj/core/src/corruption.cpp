#include "vitca/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>

#include "vitca/errors.hpp"

namespace vitca {

const char* noise_name(NoiseKind kind) { return kind == NoiseKind::dropout ? "dropout" : "gaussian"; }

NoiseKind parse_noise(const std::string& text) {
  if (text == "dropout") return NoiseKind::dropout;
  if (text == "gaussian") return NoiseKind::gaussian;
  throw ConfigError("unknown noise kind '" + text + "' (expected dropout or gaussian)");
}

std::string MaskConfig::to_string() const {
  char pct[32];
  std::snprintf(pct, sizeof pct, "%g", coverage * 100.0);
  return std::to_string(patch_h) + "x" + std::to_string(patch_w) + "@" + pct + "%:" + noise_name(kind);
}

MaskConfig MaskConfig::parse(const std::string& text) {
  static const std::regex form(R"(^\s*(\d+)x(\d+)@([0-9]*\.?[0-9]+)%(?::(\w+))?\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, form)) {
    throw ConfigError("mask '" + text + "' is not of the form PxP@NN%:kind (e.g. 2x2@50%:gaussian)");
  }
  MaskConfig c;
  c.patch_h = std::stoul(m[1]);
  c.patch_w = std::stoul(m[2]);
  c.coverage = std::stod(m[3]) / 100.0;
  if (m[4].matched) c.kind = parse_noise(m[4]);
  if (c.patch_h == 0 || c.patch_w == 0) throw ConfigError("mask '" + text + "': patch extents must be positive");
  if (c.coverage < 0.0 || c.coverage > 1.0) throw ConfigError("mask '" + text + "': coverage must lie in [0%, 100%]");
  return c;
}

std::vector<MaskConfig> curriculum_order(NoiseKind kind) {
  std::vector<MaskConfig> out;
  for (std::size_t p : {1, 2, 4}) {
    for (double c : {0.25, 0.50, 0.75}) out.push_back({p, p, c, kind});
  }
  return out;
}

CurriculumSchedule::CurriculumSchedule(std::size_t max_iteration, NoiseKind kind)
    : max_iteration_(max_iteration), configs_(curriculum_order(kind)) {
  const std::size_t last = configs_.size() - 1;
  const std::size_t denom = (std::size_t{1} << last) - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    const std::size_t num = max_iteration * ((std::size_t{1} << k) - 1);
    unlocks_.push_back((num + denom - 1) / denom);
  }
}

std::size_t CurriculumSchedule::available_count(std::size_t iteration) const {
  return static_cast<std::size_t>(std::upper_bound(unlocks_.begin(), unlocks_.end(), iteration) - unlocks_.begin());
}

std::vector<MaskConfig> CurriculumSchedule::available(std::size_t iteration) const {
  return {configs_.begin(), configs_.begin() + static_cast<std::ptrdiff_t>(available_count(iteration))};
}

MaskedImages apply_masks(const ImageBatch& images, std::span<const MaskConfig> configs, Rng& rng) {
  if (configs.size() != images.batch) {
    throw DimensionError(std::to_string(configs.size()) + " mask configs for " + std::to_string(images.batch) +
                         " images");
  }
  const std::size_t h = images.height, w = images.width;
  MaskedImages out{images, std::vector<std::uint8_t>(images.batch * h * w, 0)};
  for (std::size_t n = 0; n < images.batch; ++n) {
    const MaskConfig& cfg = configs[n];
    if (!(cfg.coverage >= 0.0 && cfg.coverage <= 1.0)) {
      throw ContractError("mask coverage " + std::to_string(cfg.coverage) + " outside [0, 1]");
    }
    if (cfg.patch_h == 0 || cfg.patch_w == 0 || h % cfg.patch_h || w % cfg.patch_w) {
      throw DimensionError(std::to_string(cfg.patch_h) + "x" + std::to_string(cfg.patch_w) +
                           " patches do not tile a " + std::to_string(h) + "x" + std::to_string(w) + " image");
    }
    const std::size_t pr = h / cfg.patch_h, pc = w / cfg.patch_w;
    const std::size_t patches = pr * pc;
    const auto chosen = static_cast<std::size_t>(std::floor(cfg.coverage * static_cast<double>(patches) + 0.5));
    std::vector<std::size_t> order(patches);
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first `chosen` slots become a uniform subset.
    for (std::size_t i = 0; i < chosen; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(patches - i));
      std::swap(order[i], order[j]);
    }
    std::uint8_t* mask = out.mask.data() + n * h * w;
    for (std::size_t i = 0; i < chosen; ++i) {
      const std::size_t y0 = (order[i] / pc) * cfg.patch_h, x0 = (order[i] % pc) * cfg.patch_w;
      for (std::size_t y = y0; y < y0 + cfg.patch_h; ++y)
        for (std::size_t x = x0; x < x0 + cfg.patch_w; ++x) mask[y * w + x] = 1;
    }
    for (std::size_t c = 0; c < images.channels; ++c) {
      for (std::size_t p = 0; p < h * w; ++p) {
        if (!mask[p]) continue;
        double& v = out.masked.at(n, c, p / w, p % w);
        v = cfg.kind == NoiseKind::dropout ? 0.0 : std::clamp(v + rng.normal(), 0.0, 1.0);
      }
    }
  }
  return out;
}

MaskedImages apply_mask(const ImageBatch& images, const MaskConfig& config, Rng& rng) {
  const std::vector<MaskConfig> configs(images.batch, config);
  return apply_masks(images, configs, rng);
}

}  // namespace vitca
