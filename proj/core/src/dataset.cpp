#include "vitca/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "vitca/errors.hpp"
#include "vitca/rng.hpp"

namespace vitca {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at, const std::filesystem::path& path) {
  if (b.size() < at + 4) throw DataError(path.string() + ": header truncated at byte " + std::to_string(b.size()));
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const char raw[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
  f.write(raw, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

// Shape indicator in a frame centred on the shape, unit = shape radius.
bool inside(int label, double u, double v) {
  const double au = std::fabs(u), av = std::fabs(v);
  switch (label) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return u * u + v * v <= 1.0 && u * u + v * v >= 0.3;
    case 2: return au <= 0.8 && av <= 0.8;
    case 3: return au <= 0.85 && av <= 0.85 && !(au <= 0.45 && av <= 0.45);
    case 4: return (au <= 0.25 && av <= 0.95) || (av <= 0.25 && au <= 0.95);
    case 5: return (std::fabs(u - v) <= 0.35 || std::fabs(u + v) <= 0.35) && au <= 0.9 && av <= 0.9;
    case 6: return v >= -0.9 && v <= 0.8 && au <= 0.95 * (v + 0.9) / 1.7;
    case 7: return (std::fabs(v + 0.45) <= 0.22 || std::fabs(v - 0.45) <= 0.22) && au <= 0.9;
    case 8: return (v >= -0.9 && v <= -0.5 && au <= 0.9) || (au <= 0.22 && v >= -0.9 && v <= 0.9);
    case 9: return (u >= -0.8 && u <= -0.38 && av <= 0.9) || (v >= 0.5 && v <= 0.9 && u >= -0.8 && u <= 0.8);
    default: return false;
  }
}

}  // namespace

const char* resample_name(Resample mode) {
  switch (mode) {
    case Resample::pad: return "pad";
    case Resample::nearest: return "nearest";
    case Resample::bilinear: return "bilinear";
  }
  return "?";
}

Resample parse_resample(const std::string& text) {
  if (text == "pad") return Resample::pad;
  if (text == "nearest") return Resample::nearest;
  if (text == "bilinear") return Resample::bilinear;
  throw ConfigError("unknown resample mode '" + text + "' (expected pad, nearest or bilinear)");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.images = images.select(indices);
  out.classes = classes;
  out.split = split;
  if (!labels.empty()) {
    for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 std::size_t target_h, std::size_t target_w, Resample mode) {
  const auto bytes = read_bytes(images);
  const std::uint32_t magic = be32(bytes, 0, images);
  if (magic != kIdxImages) {
    throw DataError(images.string() + ": bad magic " + hex(magic) + " (expected " + hex(kIdxImages) + ")");
  }
  const std::size_t n = be32(bytes, 4, images), rows = be32(bytes, 8, images), cols = be32(bytes, 12, images);
  const std::size_t need = 16 + n * rows * cols;
  if (bytes.size() < need) {
    throw DataError(images.string() + ": payload truncated, " + std::to_string(bytes.size()) + " of " +
                    std::to_string(need) + " bytes");
  }
  if (bytes.size() > need) throw DataError(images.string() + ": " + std::to_string(bytes.size() - need) +
                                           " trailing bytes after payload");
  Dataset ds;
  ds.images = ImageBatch(n, 1, rows, cols);
  for (std::size_t i = 0; i < n * rows * cols; ++i) ds.images.values[i] = bytes[16 + i] / 255.0;
  if (labels) {
    const auto lb = read_bytes(*labels);
    const std::uint32_t lmagic = be32(lb, 0, *labels);
    if (lmagic != kIdxLabels) {
      throw DataError(labels->string() + ": bad magic " + hex(lmagic) + " (expected " + hex(kIdxLabels) + ")");
    }
    const std::size_t ln = be32(lb, 4, *labels);
    if (ln != n) throw DataError(labels->string() + ": " + std::to_string(ln) + " labels for " + std::to_string(n) +
                                 " images");
    if (lb.size() != 8 + n) throw DataError(labels->string() + ": expected " + std::to_string(8 + n) +
                                            " bytes, found " + std::to_string(lb.size()));
    int mx = -1;
    for (std::size_t i = 0; i < n; ++i) {
      ds.labels.push_back(lb[8 + i]);
      mx = std::max(mx, ds.labels.back());
    }
    ds.classes = static_cast<std::size_t>(mx + 1);
  }
  if (target_h && target_w && (target_h != rows || target_w != cols)) {
    ds.images = resample_images(ds.images, target_h, target_w, mode);
  }
  return ds;
}

void write_idx_images(const std::filesystem::path& path, const ImageBatch& images) {
  if (images.channels != 1) throw DimensionError("IDX images must be single-channel");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  put_be32(f, kIdxImages);
  put_be32(f, static_cast<std::uint32_t>(images.batch));
  put_be32(f, static_cast<std::uint32_t>(images.height));
  put_be32(f, static_cast<std::uint32_t>(images.width));
  for (double v : images.values) f.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  put_be32(f, kIdxLabels);
  put_be32(f, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) f.put(static_cast<char>(l));
}

ImageBatch resample_images(const ImageBatch& images, std::size_t height, std::size_t width, Resample mode) {
  ImageBatch out(images.batch, images.channels, height, width);
  const std::size_t h = images.height, w = images.width;
  if (mode == Resample::pad) {
    if (height < h || width < w) {
      throw DimensionError("cannot pad " + std::to_string(h) + "x" + std::to_string(w) + " images down to " +
                           std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t oy = (height - h) / 2, ox = (width - w) / 2;
    for (std::size_t n = 0; n < images.batch; ++n)
      for (std::size_t c = 0; c < images.channels; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) out.at(n, c, y + oy, x + ox) = images.at(n, c, y, x);
    return out;
  }
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t n = 0; n < images.batch; ++n)
    for (std::size_t c = 0; c < images.channels; ++c)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          double& dst = out.at(n, c, y, x);
          if (mode == Resample::nearest) {
            const auto yy = std::min(h - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) * sy));
            const auto xx = std::min(w - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) * sx));
            dst = images.at(n, c, yy, xx);
            continue;
          }
          const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
          const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
          const auto y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
          const std::size_t y1 = std::min(h - 1, y0 + 1), x1 = std::min(w - 1, x0 + 1);
          const double ty = fy - static_cast<double>(y0), tx = fx - static_cast<double>(x0);
          dst = (1 - ty) * ((1 - tx) * images.at(n, c, y0, x0) + tx * images.at(n, c, y0, x1)) +
                ty * ((1 - tx) * images.at(n, c, y1, x0) + tx * images.at(n, c, y1, x1));
        }
  return out;
}

const char* synth_class_name(int label) {
  static const char* names[kSynthClasses] = {"disk", "ring",     "box",    "frame", "plus",
                                             "cross", "triangle", "equals", "tee",   "ell"};
  return label >= 0 && label < static_cast<int>(kSynthClasses) ? names[label] : "?";
}

Dataset synth_shapes(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed) {
  if (n == 0) throw ContractError("synth_shapes: need at least one image");
  if (height < 4 || width < 4) throw ContractError("synth_shapes: images must be at least 4x4");
  Rng rng(seed);
  Dataset ds;
  ds.images = ImageBatch(n, 1, height, width);
  ds.classes = kSynthClasses;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % kSynthClasses);
  rng.shuffle(labels);
  ds.labels = labels;
  constexpr int kSuper = 4;
  const double extent = static_cast<double>(std::min(height, width));
  for (std::size_t i = 0; i < n; ++i) {
    const double r = extent * rng.uniform(0.26, 0.40);
    const double cx = rng.uniform(r * 0.8, static_cast<double>(width) - r * 0.8);
    const double cy = rng.uniform(r * 0.8, static_cast<double>(height) - r * 0.8);
    const double intensity = rng.uniform(0.7, 1.0);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
            const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
            hits += inside(labels[i], (px - cx) / r, (py - cy) / r) ? 1 : 0;
          }
        ds.images.at(i, 0, y, x) = intensity * hits / static_cast<double>(kSuper * kSuper);
      }
    }
  }
  return ds;
}

DatasetSplit split_dataset(const Dataset& data, double val_fraction, double test_fraction, std::uint64_t seed) {
  if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction > 1) {
    throw ContractError("split fractions must be nonnegative and sum to at most 1");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(data.size())));
  auto take = [&](std::size_t begin, std::size_t end, const char* tag) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(end, order.size())));
    std::sort(idx.begin(), idx.end());
    Dataset d = data.subset(idx);
    d.split = tag;
    return d;
  };
  DatasetSplit s;
  s.test = take(0, n_test, "test");
  s.val = take(n_test, n_test + n_val, "val");
  s.train = take(n_test + n_val, order.size(), "train");
  return s;
}

ImageBatch pixelwise_median(const ImageBatch& images) {
  if (images.empty()) throw ContractError("median of an empty batch");
  ImageBatch out(1, images.channels, images.height, images.width);
  std::vector<double> column(images.batch);
  const std::size_t size = images.image_size();
  for (std::size_t p = 0; p < size; ++p) {
    for (std::size_t n = 0; n < images.batch; ++n) column[n] = images.values[n * size + p];
    std::sort(column.begin(), column.end());
    const std::size_t mid = images.batch / 2;
    out.values[p] = images.batch % 2 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
  }
  return out;
}

}  // namespace vitca
