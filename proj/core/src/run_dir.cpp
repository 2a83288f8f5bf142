#include "vitca/run_dir.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "vitca/errors.hpp"

namespace vitca {

std::filesystem::path run_root() {
  const char* env = std::getenv("VITCA_RUN_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

RunDir::RunDir(std::filesystem::path path, std::string command, RunConfig config)
    : path_(std::move(path)), command_(std::move(command)), config_(std::move(config)) {}

RunDir RunDir::create(const std::string& command, const RunConfig& config) {
  std::filesystem::path path;
  if (!config.output_dir.empty()) {
    path = config.output_dir;
  } else {
    const auto root = run_root();
    for (std::size_t n = 0;; ++n) {
      path = root / (command + "-" + std::to_string(config.seed) + "-" + std::to_string(n));
      if (!std::filesystem::exists(path)) break;
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw DataError("cannot create run directory " + path.string() + ": " + ec.message());
  RunDir dir(path, command, config);
  dir.write_text("config.yaml", serialize_config(config));
  return dir;
}

std::filesystem::path RunDir::file(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  const auto p = path_ / name;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p;
}

void RunDir::write_text(const std::string& name, const std::string& text) {
  std::ofstream f(file(name), std::ios::trunc);
  if (!f) throw DataError("cannot write " + (path_ / name).string());
  f << text;
}

void RunDir::write_manifest() const {
  nlohmann::json j;
  j["command"] = command_;
  j["seed"] = config_.seed;
  j["files"] = files_;
  j["config"] = serialize_config(config_);
  std::ofstream f(path_ / "manifest.json", std::ios::trunc);
  if (!f) throw DataError("cannot write " + (path_ / "manifest.json").string());
  f << j.dump(2) << '\n';
}

}  // namespace vitca
