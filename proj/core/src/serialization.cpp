#include "vitca/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <map>

#include "vitca/errors.hpp"

namespace vitca {

namespace {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("tensor file truncated while reading ") + what + " at byte " +
                      std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json model_json(const ModelConfig& c) {
  const CellLayout& l = c.layout;
  return {{"input_channels", l.input_channels},
          {"output_channels", l.output_channels},
          {"hidden_channels", l.hidden_channels},
          {"patch_h", l.patch_h},
          {"patch_w", l.patch_w},
          {"positional", positional_name(l.positional)},
          {"embed_dim", c.embed_dim},
          {"heads", c.heads},
          {"mlp_dim", c.mlp_dim},
          {"depth", c.depth},
          {"window_h", c.window_h},
          {"window_w", c.window_w},
          {"border", border_name(c.border)},
          {"attention_scale", c.attention_scale == AttentionScale::full ? "full" : "per_head"}};
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out = {'V', 'T', 'C', 'A'};
  put<std::uint32_t>(out, kTensorFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw DimensionError("tensor '" + t.name + "' shape " + shape_str(t.shape) + " does not match its values");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint8_t>(out, t.dtype == Precision::f32 ? 0 : 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.values) {
      if (t.dtype == Precision::f32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.string(4, "magic") != "VTCA") throw DataError("not a tensor file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorFileVersion) throw DataError("unsupported tensor file version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.string(r.get<std::uint32_t>("name length"), "name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw DataError("tensor '" + t.name + "' has unknown dtype " + std::to_string(dtype));
    t.dtype = dtype == 0 ? Precision::f32 : Precision::f64;
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 16) throw DataError("tensor '" + t.name + "' has implausible rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dims")));
    const std::size_t n = shape_numel(t.shape);
    if (n > bytes.size()) throw DataError("tensor '" + t.name + "' claims more values than the file holds");
    t.values.resize(n);
    for (double& v : t.values) {
      v = t.dtype == Precision::f32 ? static_cast<double>(r.get<float>("payload")) : r.get<double>("payload");
    }
    out.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("trailing bytes after tensor " + std::to_string(count) + " at " +
                                 std::to_string(r.pos()));
  return out;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_tensors(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<NamedTensor> params_to_named(const UpdateRuleParams& params) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : params.named()) {
    out.push_back({name, t->precision(), t->shape(), std::vector<double>(t->values().begin(), t->values().end())});
  }
  return out;
}

void assign_params(UpdateRuleParams& params, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t;
  for (auto& [name, t] : params.named()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("parameter '" + name + "' missing from file");
    if (it->second->shape != t->shape()) {
      throw DataError("parameter '" + name + "' has shape " + shape_str(it->second->shape) + ", expected " +
                      shape_str(t->shape()));
    }
    auto dst = t->mutable_values();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
}

std::string model_config_to_json(const ModelConfig& config) { return model_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.layout.input_channels = j.at("input_channels").get<std::size_t>();
    c.layout.output_channels = j.at("output_channels").get<std::size_t>();
    c.layout.hidden_channels = j.at("hidden_channels").get<std::size_t>();
    c.layout.patch_h = j.at("patch_h").get<std::size_t>();
    c.layout.patch_w = j.at("patch_w").get<std::size_t>();
    c.layout.positional = parse_positional(j.at("positional").get<std::string>());
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.window_h = j.at("window_h").get<std::size_t>();
    c.window_w = j.at("window_w").get<std::size_t>();
    c.border = parse_border(j.at("border").get<std::string>());
    c.attention_scale = j.at("attention_scale").get<std::string>() == "full" ? AttentionScale::full
                                                                             : AttentionScale::per_head;
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model sidecar: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelConfig& config, const UpdateRuleParams& params) {
  write_tensor_file(path, params_to_named(params));
  std::ofstream f(path.string() + ".json", std::ios::trunc);
  if (!f) throw DataError("cannot write sidecar for " + path.string());
  f << model_config_to_json(config) << '\n';
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path.string() + ".json");
  if (!f) throw DataError("missing hyperparameter sidecar " + path.string() + ".json");
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  LoadedModel m;
  m.config = model_config_from_json(text);
  const auto tensors = read_tensor_file(path);
  std::size_t cells = 1;
  for (const NamedTensor& t : tensors) {
    if (t.name == "pos.table" && !t.shape.empty()) cells = t.shape[0];
  }
  Rng rng(0);
  m.params = init_params(m.config, cells, rng);
  assign_params(m.params, tensors);
  return m;
}

}  // namespace vitca
