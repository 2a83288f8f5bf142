#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vitca {

// Plain NCHW image batch, values nominally in [0, 1]. Used for data that never
// needs gradients (datasets, masked inputs, evaluation outputs).
struct ImageBatch {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  ImageBatch() = default;
  ImageBatch(std::size_t b, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : batch(b), channels(c), height(h), width(w), values(b * c * h * w, fill) {}

  std::size_t image_size() const { return channels * height * width; }
  bool empty() const { return batch == 0; }
  bool same_shape(const ImageBatch& other) const {
    return batch == other.batch && channels == other.channels && height == other.height && width == other.width;
  }

  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return values[((n * channels + c) * height + y) * width + x];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return values[((n * channels + c) * height + y) * width + x];
  }

  std::span<const double> image(std::size_t n) const {
    return std::span<const double>(values).subspan(n * image_size(), image_size());
  }
  std::span<double> image(std::size_t n) { return std::span<double>(values).subspan(n * image_size(), image_size()); }

  // Images [begin, end).
  ImageBatch range(std::size_t begin, std::size_t end) const;
  ImageBatch select(std::span<const std::size_t> indices) const;
  void append(const ImageBatch& other);
};

}  // namespace vitca
