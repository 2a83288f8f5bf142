#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vitca/images.hpp"

namespace vitca {

enum class Resample {
  pad,       // centre with zero borders; exact pixel values
  nearest,
  bilinear,
};

const char* resample_name(Resample mode);
Resample parse_resample(const std::string& text);

struct Dataset {
  ImageBatch images;       // values in [0, 1]
  std::vector<int> labels;  // empty or one per image
  std::size_t classes = 0;
  std::string split = "train";

  std::size_t size() const { return images.batch; }
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

// IDX image file (magic 0x00000803, u8 pixels) and optional label file
// (0x00000801). Pixels are scaled by 1/255; images are resampled to
// target_h x target_w when those are nonzero and differ from the file.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {},
                 std::size_t target_h = 0, std::size_t target_w = 0, Resample mode = Resample::pad);

// Writers for fixtures and exports. Pixels are rounded from [0, 1] to u8.
void write_idx_images(const std::filesystem::path& path, const ImageBatch& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);

ImageBatch resample_images(const ImageBatch& images, std::size_t height, std::size_t width, Resample mode);

inline constexpr std::size_t kSynthClasses = 10;
const char* synth_class_name(int label);

// Deterministic single-channel corpus of anti-aliased shapes and strokes on a
// black background: disk, ring, box, frame, plus, cross, triangle, equals,
// T and L. Labels cycle through the classes, then the order is shuffled.
Dataset synth_shapes(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed);

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Disjoint split by a seeded permutation; test and val take their rounded
// fractions first, train keeps the rest.
DatasetSplit split_dataset(const Dataset& data, double val_fraction, double test_fraction, std::uint64_t seed);

// Per-pixel median over the batch (mean of the two middle values for even counts).
ImageBatch pixelwise_median(const ImageBatch& images);

}  // namespace vitca
