#include "vitca/neighborhood.hpp"

#include "vitca/errors.hpp"

namespace vitca {

const char* border_name(BorderMode mode) { return mode == BorderMode::wrap ? "wrap" : "zero"; }

BorderMode parse_border(const std::string& text) {
  if (text == "wrap") return BorderMode::wrap;
  if (text == "zero") return BorderMode::zero;
  throw ConfigError("unknown border mode '" + text + "' (expected wrap or zero)");
}

IndexTensor build_neighborhood_index(std::size_t rows, std::size_t cols, std::size_t window_h, std::size_t window_w,
                                     BorderMode border) {
  if (window_h % 2 == 0 || window_w % 2 == 0) {
    throw ContractError("neighbourhood window " + std::to_string(window_h) + "x" + std::to_string(window_w) +
                        " must have odd extents");
  }
  if (window_h > rows || window_w > cols) {
    throw ContractError("neighbourhood window " + std::to_string(window_h) + "x" + std::to_string(window_w) +
                        " exceeds the " + std::to_string(rows) + "x" + std::to_string(cols) + " cell grid");
  }
  IndexTensor index;
  index.rows = rows * cols;
  index.cols = window_h * window_w;
  index.values.reserve(index.rows * index.cols);
  const auto rh = static_cast<std::ptrdiff_t>(window_h / 2);
  const auto rw = static_cast<std::ptrdiff_t>(window_w / 2);
  const auto r = static_cast<std::ptrdiff_t>(rows);
  const auto c = static_cast<std::ptrdiff_t>(cols);
  for (std::ptrdiff_t y = 0; y < r; ++y) {
    for (std::ptrdiff_t x = 0; x < c; ++x) {
      for (std::ptrdiff_t dy = -rh; dy <= rh; ++dy) {
        for (std::ptrdiff_t dx = -rw; dx <= rw; ++dx) {
          std::ptrdiff_t ny = y + dy, nx = x + dx;
          if (border == BorderMode::wrap) {
            ny = (ny % r + r) % r;
            nx = (nx % c + c) % c;
          } else if (ny < 0 || ny >= r || nx < 0 || nx >= c) {
            index.values.push_back(-1);
            continue;
          }
          index.values.push_back(static_cast<std::int32_t>(ny * c + nx));
        }
      }
    }
  }
  return index;
}

}  // namespace vitca
