#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "milfd/matrix.hpp"
#include "milfd/synthetic.hpp"

namespace milfd {

// Tracklet feature file, little-endian:
//   "TRKF" | u32 version = 1 | u32 D | u32 T | T frames x D f32 (frame-major)
inline constexpr char kFeatureMagic[4] = {'T', 'R', 'K', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

std::string encode_features(const Matrix& features);
Matrix decode_features(std::string_view bytes, const std::string& origin = "<memory>");

void write_feature_file(const std::filesystem::path& path, const Matrix& features);
Matrix read_feature_file(const std::filesystem::path& path);

struct TrackletRecord {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::size_t frames = 0;
  std::optional<int> label;
};

struct VideoRecord {
  std::string id;
  int label = 0;
  std::vector<TrackletRecord> tracklets;
};

struct DatasetManifest {
  std::string split;
  std::vector<VideoRecord> videos;

  // Unique video ids, K >= 1, fake videos hold a fake tracklet and real
  // videos none (where tracklet labels are present).
  void validate() const;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text, const std::string& origin = "<memory>");

// Writes <dir>/<split>.json plus one feature file per tracklet under
// <dir>/features/<split>/<video id>/. Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

// Loads the manifest and every feature file it references.
Dataset load_dataset(const std::filesystem::path& manifest_path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace milfd
