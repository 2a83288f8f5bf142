#include "vitca/positional.hpp"

#include <cmath>
#include <numbers>

#include "vitca/errors.hpp"

namespace vitca {

namespace {
constexpr int kFrequencies = 5;
}

const char* positional_name(PositionalKind kind) {
  switch (kind) {
    case PositionalKind::none: return "none";
    case PositionalKind::handcrafted: return "handcrafted";
    case PositionalKind::learned: return "learned";
    case PositionalKind::xy: return "xy";
    case PositionalKind::sincos5: return "sincos5";
    case PositionalKind::sincos5xy: return "sincos5xy";
  }
  return "?";
}

PositionalKind parse_positional(const std::string& text) {
  for (PositionalKind k : {PositionalKind::none, PositionalKind::handcrafted, PositionalKind::learned,
                           PositionalKind::xy, PositionalKind::sincos5, PositionalKind::sincos5xy}) {
    if (text == positional_name(k)) return k;
  }
  throw ConfigError("unknown positional encoding '" + text +
                    "' (expected none, handcrafted, learned, xy, sincos5 or sincos5xy)");
}

std::size_t positional_channels(PositionalKind kind) {
  switch (kind) {
    case PositionalKind::xy: return 2;
    case PositionalKind::sincos5: return 4 * kFrequencies;
    case PositionalKind::sincos5xy: return 4 * kFrequencies + 2;
    default: return 0;
  }
}

bool positional_is_added(PositionalKind kind) {
  return kind == PositionalKind::handcrafted || kind == PositionalKind::learned;
}

bool positional_is_resolution_free(PositionalKind kind) { return !positional_is_added(kind); }

double normalized_coordinate(std::size_t index, std::size_t extent) {
  if (extent <= 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(extent - 1);
}

std::vector<double> concat_encoding(PositionalKind kind, std::size_t height, std::size_t width) {
  const std::size_t channels = positional_channels(kind);
  std::vector<double> out(channels * height * width);
  if (channels == 0) return out;
  const std::size_t plane = height * width;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double px = normalized_coordinate(x, width);
      const double py = normalized_coordinate(y, height);
      const std::size_t at = y * width + x;
      std::size_t c = 0;
      if (kind != PositionalKind::xy) {
        for (double p : {px, py}) {
          for (int j = 0; j < kFrequencies; ++j) {
            const double arg = std::ldexp(std::numbers::pi * p, j);
            out[(c++) * plane + at] = std::sin(arg);
            out[(c++) * plane + at] = std::cos(arg);
          }
        }
      }
      if (kind != PositionalKind::sincos5) {
        out[(c++) * plane + at] = px;
        out[(c++) * plane + at] = py;
      }
    }
  }
  return out;
}

std::vector<double> sinusoid_table(std::size_t cells, std::size_t dim) {
  std::vector<double> out(cells * dim);
  for (std::size_t n = 0; n < cells; ++n) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double exponent = static_cast<double>(k - k % 2) / static_cast<double>(dim);
      const double angle = static_cast<double>(n) / std::pow(10000.0, exponent);
      out[n * dim + k] = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

}  // namespace vitca
