#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vitca/config.hpp"

namespace vitca {

// $VITCA_RUN_ROOT, or "runs" when unset.
std::filesystem::path run_root();

// Output directory of one command: config snapshot, artifacts and a
// manifest.json listing them.
class RunDir {
 public:
  // Uses config.output_dir when set, else <run_root>/<command>-<seed>-<n> with
  // the first unused n. Writes config.yaml immediately.
  static RunDir create(const std::string& command, const RunConfig& config);

  const std::filesystem::path& path() const { return path_; }
  // path()/name, recorded for the manifest.
  std::filesystem::path file(const std::string& name);
  void write_text(const std::string& name, const std::string& text);
  void write_manifest() const;

 private:
  RunDir(std::filesystem::path path, std::string command, RunConfig config);

  std::filesystem::path path_;
  std::string command_;
  RunConfig config_;
  std::vector<std::string> files_;
};

}  // namespace vitca
