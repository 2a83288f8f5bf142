#pragma once

#include <cstddef>
#include <filesystem>

#include "vitca/images.hpp"

namespace vitca {

// Tiles the batch row-major into a canvas `cols` images wide and writes binary
// PGM (1 channel) or PPM (3 channels). Values are clamped to [0, 1] and
// quantized to 8 bits. Unfilled tiles of the last row stay black.
void write_image_grid(const ImageBatch& images, std::size_t cols, const std::filesystem::path& path);

// Reads a binary P5/P6 file as a single image batch with values in [0, 1].
ImageBatch read_pnm(const std::filesystem::path& path);

}  // namespace vitca
