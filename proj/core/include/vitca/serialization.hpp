#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vitca/tensor.hpp"
#include "vitca/update_rule.hpp"

namespace vitca {

// Binary tensor container, all integers little-endian:
//   "VTCA" | u32 version | u32 count | count x record
//   record = u32 name_len | name | u8 dtype (0 f32, 1 f64) | u32 rank |
//            u64 dims[rank] | row-major payload in dtype
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  Precision dtype = Precision::f32;
  Shape shape;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

std::vector<NamedTensor> params_to_named(const UpdateRuleParams& params);
// Copies values into params by name; every parameter must be present with its shape.
void assign_params(UpdateRuleParams& params, const std::vector<NamedTensor>& tensors);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// Writes <path> and the hyperparameter sidecar <path>.json.
void save_model(const std::filesystem::path& path, const ModelConfig& config, const UpdateRuleParams& params);

using LoadedModel = Model;
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace vitca
