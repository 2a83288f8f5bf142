#pragma once

#include <cstddef>
#include <string>

#include "vitca/tensor.hpp"

namespace vitca {

enum class BorderMode {
  wrap,  // toroidal
  zero,  // out-of-grid neighbours are index -1 (zero key and value)
};

const char* border_name(BorderMode mode);
BorderMode parse_border(const std::string& text);

// [rows*cols x window_h*window_w] table. Row i lists cell i's neighbours for
// offsets dy = -window_h/2 .. window_h/2 (outer) and dx likewise (inner),
// i.e. top-left to bottom-right. Windows must be odd and no larger than the
// grid, so a wrapped neighbourhood never lists a cell twice.
IndexTensor build_neighborhood_index(std::size_t rows, std::size_t cols, std::size_t window_h, std::size_t window_w,
                                     BorderMode border = BorderMode::wrap);

}  // namespace vitca
