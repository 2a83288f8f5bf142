#include "vitca/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "vitca/errors.hpp"

namespace vitca {

namespace {

struct Field {
  std::string section;  // empty for top-level keys
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& text, const std::string& path)> set;

  std::string path() const { return section.empty() ? key : section + "." + key; }
};

std::string real_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::size_t parse_count(const std::string& text, const std::string& path) {
  std::size_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(path + ": expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& text, const std::string& path) {
  double v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(path + ": expected a finite real number, got '" + text + "'");
  }
  return v;
}

template <class Acc>
Field count_field(std::string section, std::string key, Acc acc) {
  return {section, key, [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
          [acc](RunConfig& c, const std::string& t, const std::string& p) {
            acc(c) = static_cast<std::remove_reference_t<decltype(acc(c))>>(parse_count(t, p));
          }};
}

template <class Acc>
Field real_field(std::string section, std::string key, Acc acc) {
  return {section, key, [acc](const RunConfig& c) { return real_text(acc(const_cast<RunConfig&>(c))); },
          [acc](RunConfig& c, const std::string& t, const std::string& p) { acc(c) = parse_real(t, p); }};
}

template <class Acc>
Field text_field(std::string section, std::string key, Acc acc) {
  return {section, key, [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); },
          [acc](RunConfig& c, const std::string& t, const std::string&) { acc(c) = t; }};
}

// Enum stored through name/parse functions; parse errors gain the key path.
template <class Acc, class Name, class Parse>
Field enum_field(std::string section, std::string key, Acc acc, Name name, Parse parse) {
  return {section, key, [acc, name](const RunConfig& c) { return std::string(name(acc(const_cast<RunConfig&>(c)))); },
          [acc, parse](RunConfig& c, const std::string& t, const std::string& p) {
            try {
              acc(c) = parse(t);
            } catch (const Error& e) {
              throw ConfigError(p + ": " + e.what());
            }
          }};
}

const char* backend_name(AttentionBackend b) { return b == AttentionBackend::global ? "global" : "local"; }
AttentionBackend parse_backend(const std::string& t) {
  if (t == "local") return AttentionBackend::local;
  if (t == "global") return AttentionBackend::global;
  throw ConfigError("unknown attention backend '" + t + "' (expected local or global)");
}
const char* scale_name(AttentionScale s) { return s == AttentionScale::full ? "full" : "per_head"; }
AttentionScale parse_scale(const std::string& t) {
  if (t == "per_head") return AttentionScale::per_head;
  if (t == "full") return AttentionScale::full;
  throw ConfigError("unknown attention scale '" + t + "' (expected per_head or full)");
}
const char* source_name(DataSource s) { return s == DataSource::idx ? "idx" : "synthetic"; }
DataSource parse_source(const std::string& t) {
  if (t == "synthetic") return DataSource::synthetic;
  if (t == "idx") return DataSource::idx;
  throw ConfigError("unknown data source '" + t + "' (expected synthetic or idx)");
}
Precision parse_precision(const std::string& t) {
  if (t == "f32") return Precision::f32;
  if (t == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + t + "' (expected f32 or f64)");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& t, const std::string& p) {
                   std::uint64_t v = 0;
                   const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
                   if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
                     throw ConfigError(p + ": expected an unsigned 64-bit integer, got '" + t + "'");
                   }
                   c.seed = v;
                 }});
    f.push_back(text_field("", "output_dir", [](RunConfig& c) -> std::string& { return c.output_dir; }));

    const std::string m = "model";
    f.push_back(count_field(m, "input_channels", [](RunConfig& c) -> auto& { return c.model.layout.input_channels; }));
    f.push_back(count_field(m, "output_channels", [](RunConfig& c) -> auto& { return c.model.layout.output_channels; }));
    f.push_back(count_field(m, "hidden_channels", [](RunConfig& c) -> auto& { return c.model.layout.hidden_channels; }));
    f.push_back(count_field(m, "patch_h", [](RunConfig& c) -> auto& { return c.model.layout.patch_h; }));
    f.push_back(count_field(m, "patch_w", [](RunConfig& c) -> auto& { return c.model.layout.patch_w; }));
    f.push_back(enum_field(m, "positional", [](RunConfig& c) -> auto& { return c.model.layout.positional; },
                           positional_name, parse_positional));
    f.push_back(count_field(m, "embed_dim", [](RunConfig& c) -> auto& { return c.model.embed_dim; }));
    f.push_back(count_field(m, "heads", [](RunConfig& c) -> auto& { return c.model.heads; }));
    f.push_back(count_field(m, "mlp_dim", [](RunConfig& c) -> auto& { return c.model.mlp_dim; }));
    f.push_back(count_field(m, "depth", [](RunConfig& c) -> auto& { return c.model.depth; }));
    f.push_back(count_field(m, "window_h", [](RunConfig& c) -> auto& { return c.model.window_h; }));
    f.push_back(count_field(m, "window_w", [](RunConfig& c) -> auto& { return c.model.window_w; }));
    f.push_back(enum_field(m, "border", [](RunConfig& c) -> auto& { return c.model.border; }, border_name,
                           parse_border));
    f.push_back(enum_field(m, "attention_scale", [](RunConfig& c) -> auto& { return c.model.attention_scale; },
                           scale_name, parse_scale));
    f.push_back(enum_field(m, "backend", [](RunConfig& c) -> auto& { return c.model.backend; }, backend_name,
                           parse_backend));

    const std::string t = "train";
    f.push_back(count_field(t, "iterations", [](RunConfig& c) -> auto& { return c.train.iterations; }));
    f.push_back(count_field(t, "batch", [](RunConfig& c) -> auto& { return c.train.batch; }));
    f.push_back(real_field(t, "sigma", [](RunConfig& c) -> auto& { return c.train.sigma; }));
    f.push_back(count_field(t, "t_min", [](RunConfig& c) -> auto& { return c.train.t_min; }));
    f.push_back(count_field(t, "t_max", [](RunConfig& c) -> auto& { return c.train.t_max; }));
    f.push_back(real_field(t, "lr", [](RunConfig& c) -> auto& { return c.train.lr; }));
    f.push_back(real_field(t, "alpha", [](RunConfig& c) -> auto& { return c.train.alpha; }));
    f.push_back(real_field(t, "beta", [](RunConfig& c) -> auto& { return c.train.beta; }));
    f.push_back(count_field(t, "pool_size", [](RunConfig& c) -> auto& { return c.train.pool_size; }));
    f.push_back(real_field(t, "adam_beta1", [](RunConfig& c) -> auto& { return c.train.adam.beta1; }));
    f.push_back(real_field(t, "adam_beta2", [](RunConfig& c) -> auto& { return c.train.adam.beta2; }));
    f.push_back(real_field(t, "adam_eps", [](RunConfig& c) -> auto& { return c.train.adam.eps; }));
    f.push_back(real_field(t, "weight_decay", [](RunConfig& c) -> auto& { return c.train.adam.weight_decay; }));
    f.push_back(enum_field(t, "rollout", [](RunConfig& c) -> auto& { return c.train.rollout; }, rollout_name,
                           parse_rollout));
    f.push_back(count_field(t, "checkpoint_segments", [](RunConfig& c) -> auto& { return c.train.checkpoint_segments; }));
    f.push_back(count_field(t, "fusion_pre", [](RunConfig& c) -> auto& { return c.train.fusion_pre; }));
    f.push_back(count_field(t, "fusion_post", [](RunConfig& c) -> auto& { return c.train.fusion_post; }));
    f.push_back(count_field(t, "curriculum_max_iteration",
                            [](RunConfig& c) -> auto& { return c.train.curriculum_max_iteration; }));
    f.push_back({t, "noise",
                 [](const RunConfig& c) { return std::string(c.train.noise ? noise_name(*c.train.noise) : "auto"); },
                 [](RunConfig& c, const std::string& s, const std::string& p) {
                   if (s == "auto") {
                     c.train.noise.reset();
                     return;
                   }
                   try {
                     c.train.noise = parse_noise(s);
                   } catch (const Error& e) {
                     throw ConfigError(p + ": " + e.what() + " (or auto)");
                   }
                 }});
    f.push_back(enum_field(t, "precision", [](RunConfig& c) -> auto& { return c.train.precision; }, precision_name,
                           parse_precision));
    f.push_back(count_field(t, "checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }));

    const std::string e = "eval";
    f.push_back(count_field(e, "steps", [](RunConfig& c) -> auto& { return c.eval.steps; }));
    f.push_back(real_field(e, "sigma", [](RunConfig& c) -> auto& { return c.eval.sigma; }));
    f.push_back(count_field(e, "stability_steps", [](RunConfig& c) -> auto& { return c.eval.stability_steps; }));
    f.push_back(real_field(e, "converge_tol", [](RunConfig& c) -> auto& { return c.eval.converge_tol; }));
    f.push_back(count_field(e, "converge_window", [](RunConfig& c) -> auto& { return c.eval.converge_window; }));
    f.push_back(real_field(e, "divergence_bound", [](RunConfig& c) -> auto& { return c.eval.divergence_bound; }));
    f.push_back(count_field(e, "pca_max_samples", [](RunConfig& c) -> auto& { return c.eval.pca_max_samples; }));
    f.push_back(count_field(e, "batch", [](RunConfig& c) -> auto& { return c.eval.batch; }));

    const std::string p = "probe";
    f.push_back(count_field(p, "epochs", [](RunConfig& c) -> auto& { return c.probe.epochs; }));
    f.push_back(real_field(p, "lr", [](RunConfig& c) -> auto& { return c.probe.lr; }));
    f.push_back(count_field(p, "batch", [](RunConfig& c) -> auto& { return c.probe.batch; }));
    f.push_back(real_field(p, "weight_decay", [](RunConfig& c) -> auto& { return c.probe.weight_decay; }));

    const std::string d = "data";
    f.push_back(enum_field(d, "source", [](RunConfig& c) -> auto& { return c.data.source; }, source_name,
                           parse_source));
    f.push_back(text_field(d, "train_images", [](RunConfig& c) -> auto& { return c.data.train_images; }));
    f.push_back(text_field(d, "train_labels", [](RunConfig& c) -> auto& { return c.data.train_labels; }));
    f.push_back(text_field(d, "test_images", [](RunConfig& c) -> auto& { return c.data.test_images; }));
    f.push_back(text_field(d, "test_labels", [](RunConfig& c) -> auto& { return c.data.test_labels; }));
    f.push_back(count_field(d, "synthetic_count", [](RunConfig& c) -> auto& { return c.data.synthetic_count; }));
    f.push_back(count_field(d, "height", [](RunConfig& c) -> auto& { return c.data.height; }));
    f.push_back(count_field(d, "width", [](RunConfig& c) -> auto& { return c.data.width; }));
    f.push_back(enum_field(d, "resample", [](RunConfig& c) -> auto& { return c.data.resample; }, resample_name,
                           parse_resample));
    f.push_back(real_field(d, "val_fraction", [](RunConfig& c) -> auto& { return c.data.val_fraction; }));
    f.push_back(real_field(d, "test_fraction", [](RunConfig& c) -> auto& { return c.data.test_fraction; }));
    return f;
  }();
  return table;
}

std::string scalar_of(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError(path + ": expected a scalar value");
  return node.Scalar();
}

}  // namespace

void DataConfig::validate() const {
  if (height == 0 || width == 0) throw ConfigError("data.height and data.width must be >= 1");
  if (source == DataSource::synthetic && synthetic_count < 2) throw ConfigError("data.synthetic_count must be >= 2");
  if (source == DataSource::idx && train_images.empty()) throw ConfigError("data.train_images is required for idx");
  if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0)) {
    throw ConfigError("data.val_fraction and data.test_fraction must be >= 0 with a sum below 1");
  }
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  eval.validate();
  probe.validate();
  data.validate();
  if (data.height % model.layout.patch_h != 0 || data.width % model.layout.patch_w != 0) {
    throw ConfigError("data.height and data.width must be multiples of model.patch_h and model.patch_w");
  }
  const std::size_t rows = data.height / model.layout.patch_h, cols = data.width / model.layout.patch_w;
  if (model.window_h > rows || model.window_w > cols) {
    throw ConfigError("model.window_h x model.window_w must fit inside the " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " cell grid");
  }
  if (train.rollout == RolloutMode::fusion_mitosis && (rows % 2 != 0 || cols % 2 != 0)) {
    throw ConfigError("train.rollout fusion-mitosis needs an even cell grid, got " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig config;
  if (root.IsNull()) {
    config.validate();
    return config;
  }
  if (!root.IsMap()) throw ConfigError("config document must be a mapping");

  std::map<std::string, std::map<std::string, const Field*>> index;
  for (const Field& f : fields()) index[f.section][f.key] = &f;

  for (const auto& entry : root) {
    const std::string key = entry.first.as<std::string>();
    if (auto top = index[""].find(key); top != index[""].end()) {
      top->second->set(config, scalar_of(entry.second, key), key);
      continue;
    }
    auto section = index.find(key);
    if (key.empty() || section == index.end()) throw ConfigError("unknown config key '" + key + "'");
    if (entry.second.IsNull()) continue;
    if (!entry.second.IsMap()) throw ConfigError(key + ": expected a mapping");
    for (const auto& item : entry.second) {
      const std::string name = item.first.as<std::string>();
      const std::string path = key + "." + name;
      auto field = section->second.find(name);
      if (field == section->second.end()) throw ConfigError("unknown config key '" + path + "'");
      field->second->set(config, scalar_of(item.second, path), path);
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream text;
  text << f.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& config) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  std::string open;
  for (const Field& f : fields()) {
    if (f.section != open) {
      if (!open.empty()) out << YAML::EndMap;
      out << YAML::Key << f.section << YAML::Value << YAML::BeginMap;
      open = f.section;
    }
    out << YAML::Key << f.key << YAML::Value << YAML::DoubleQuoted << f.get(config);
  }
  if (!open.empty()) out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::pair<std::string, std::string>>& overrides) {
  YAML::Node root = YAML::Load(serialize_config(config));
  for (const auto& [path, value] : overrides) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
      root[path] = value;
    } else {
      const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
      if (!root[section] || !root[section].IsMap()) throw ConfigError("unknown config key '" + path + "'");
      root[section][key] = value;
    }
  }
  YAML::Emitter out;
  out << root;
  return parse_config(out.c_str());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.path());
  return keys;
}

DatasetSplit load_data(const DataConfig& data, std::uint64_t seed) {
  data.validate();
  if (data.source == DataSource::synthetic) {
    return split_dataset(synth_shapes(data.synthetic_count, data.height, data.width, seed), data.val_fraction,
                         data.test_fraction, seed);
  }
  auto labels = [](const std::string& p) {
    return p.empty() ? std::optional<std::filesystem::path>{} : std::optional<std::filesystem::path>{p};
  };
  const Dataset train = load_idx(data.train_images, labels(data.train_labels), data.height, data.width, data.resample);
  if (data.test_images.empty()) return split_dataset(train, data.val_fraction, data.test_fraction, seed);
  DatasetSplit s = split_dataset(train, data.val_fraction, 0.0, seed);
  s.test = load_idx(data.test_images, labels(data.test_labels), data.height, data.width, data.resample);
  s.test.split = "test";
  s.test.classes = std::max(s.test.classes, s.train.classes);
  s.train.classes = s.test.classes;
  return s;
}

}  // namespace vitca
