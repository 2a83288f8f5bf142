#include "vitca/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vitca/errors.hpp"

namespace vitca {

void write_image_grid(const ImageBatch& images, std::size_t cols, const std::filesystem::path& path) {
  if (images.empty()) throw ContractError("write_image_grid: empty batch");
  if (images.channels != 1 && images.channels != 3) {
    throw DimensionError("write_image_grid: need 1 or 3 channels, got " + std::to_string(images.channels));
  }
  if (cols == 0) throw ContractError("write_image_grid: cols must be positive");
  cols = std::min(cols, images.batch);
  const std::size_t rows = (images.batch + cols - 1) / cols;
  const std::size_t h = images.height, w = images.width, c = images.channels;
  const std::size_t canvas_w = cols * w, canvas_h = rows * h;
  std::vector<unsigned char> pixels(canvas_w * canvas_h * c, 0);
  for (std::size_t n = 0; n < images.batch; ++n) {
    const std::size_t oy = (n / cols) * h, ox = (n % cols) * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double v = std::clamp(images.at(n, ch, y, x), 0.0, 1.0);
          pixels[((oy + y) * canvas_w + ox + x) * c + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << (c == 1 ? "P5" : "P6") << '\n' << canvas_w << ' ' << canvas_h << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

ImageBatch read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(path.string() + ": " + what + " at byte " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("expected a number");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) fail("not a binary PGM/PPM");
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const std::size_t width = number(), height = number(), maxval = number();
  if (maxval == 0 || maxval > 255) fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("missing header terminator");
  ++pos;
  const std::size_t need = width * height * channels;
  if (bytes.size() - pos < need) fail("payload truncated, expected " + std::to_string(need) + " bytes");
  ImageBatch out(1, channels, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        out.at(0, c, y, x) = bytes[pos + (y * width + x) * channels + c] / static_cast<double>(maxval);
  return out;
}

}  // namespace vitca
