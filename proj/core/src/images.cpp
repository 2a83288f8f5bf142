#include "vitca/images.hpp"

#include <algorithm>
#include <string>

#include "vitca/errors.hpp"

namespace vitca {

ImageBatch ImageBatch::range(std::size_t begin, std::size_t end) const {
  if (begin > end || end > batch) {
    throw IndexError("image range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside batch of " +
                     std::to_string(batch));
  }
  ImageBatch out(end - begin, channels, height, width);
  std::copy(values.begin() + static_cast<std::ptrdiff_t>(begin * image_size()),
            values.begin() + static_cast<std::ptrdiff_t>(end * image_size()), out.values.begin());
  return out;
}

ImageBatch ImageBatch::select(std::span<const std::size_t> indices) const {
  ImageBatch out(indices.size(), channels, height, width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= batch) throw IndexError("image index " + std::to_string(indices[i]) + " out of range");
    const auto src = image(indices[i]);
    std::copy(src.begin(), src.end(), out.image(i).begin());
  }
  return out;
}

void ImageBatch::append(const ImageBatch& other) {
  if (empty()) {
    *this = other;
    return;
  }
  if (other.channels != channels || other.height != height || other.width != width) {
    throw DimensionError("cannot append images of a different shape");
  }
  values.insert(values.end(), other.values.begin(), other.values.end());
  batch += other.batch;
}

}  // namespace vitca
