#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vitca {

// How cells learn where they are. The added variants act on tokens; the
// concatenated ones occupy a positional slab inside every cell.
enum class PositionalKind {
  none,
  handcrafted,  // 1-D Transformer sinusoid over the flattened cell index, added
  learned,      // trainable N x d table, added
  xy,           // normalized pixel coordinates, 2 channels
  sincos5,      // sin/cos of 2^j * pi * p for j < 5 and p in {x, y}, 20 channels
  sincos5xy,    // sincos5 followed by xy, 22 channels
};

const char* positional_name(PositionalKind kind);
PositionalKind parse_positional(const std::string& text);

// Channels contributed to each pixel of the positional slab (0 for added kinds).
std::size_t positional_channels(PositionalKind kind);
bool positional_is_added(PositionalKind kind);
// Whether the encoding can be recomputed at another grid resolution.
bool positional_is_resolution_free(PositionalKind kind);

// Pixel coordinate mapped to [-1, 1]; the first and last pixel land on -1 and 1.
double normalized_coordinate(std::size_t index, std::size_t extent);

// Per-pixel encoding laid out [C_pe][height][width]. Empty for added kinds.
std::vector<double> concat_encoding(PositionalKind kind, std::size_t height, std::size_t width);

// Row-major [cells x dim] sinusoid table: even columns sin(n / 10000^(2i/dim)),
// odd columns the matching cos.
std::vector<double> sinusoid_table(std::size_t cells, std::size_t dim);

}  // namespace vitca
