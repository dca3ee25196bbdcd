#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "milfd/bag_model.hpp"
#include "milfd/parameter.hpp"
#include "milfd/qnet.hpp"

namespace milfd {

// Checkpoint file, little-endian:
//   "MILC" | u32 version = 1 | u32 config length | config JSON (UTF-8)
//   | u32 entry count | per entry: u32 name length | name | u32 rank = 2
//   | u32 rows | u32 cols | rows * cols f64 (row-major)
//   | u64 FNV-1a of every preceding byte
inline constexpr char kCheckpointMagic[4] = {'M', 'I', 'L', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_json;
  ParameterSet params;
};

std::uint64_t fnv1a64(std::string_view bytes);

std::string encode_checkpoint(std::string_view config_json, const ParameterSet& params);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, std::string_view config_json,
                     const ParameterSet& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model checkpoints echo {"kind": "mil", "model": {...}} plus an optional
// "train" object. Loading checks every parameter name and shape against
// what the config implies.
std::string model_checkpoint_config(const ModelConfig& cfg, std::string_view train_json = {});
void save_model(const std::filesystem::path& path, const Model& model, std::string_view train_json = {});
Model model_from_checkpoint(const Checkpoint& ckpt, const std::string& origin = "<memory>");
Model load_model(const std::filesystem::path& path);

// Q-Net checkpoints echo {"kind": "qnet", "qnet": {...}}.
void save_qnet(const std::filesystem::path& path, const QNet& net);
QNet qnet_from_checkpoint(const Checkpoint& ckpt, const std::string& origin = "<memory>");
QNet load_qnet(const std::filesystem::path& path);

}  // namespace milfd
