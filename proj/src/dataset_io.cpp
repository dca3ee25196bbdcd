#include "milfd/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "milfd/error.hpp"

namespace milfd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

std::string label_name(int label) { return label == 1 ? "fake" : "real"; }

int parse_label(const std::string& s, const std::string& origin) {
  if (s == "fake") return 1;
  if (s == "real") return 0;
  throw DataError(origin + ": label must be \"real\" or \"fake\", got \"" + s + "\"");
}

}  // namespace

std::string encode_features(const Matrix& features) {
  const std::size_t dim = features.rows(), steps = features.cols();
  std::string out;
  out.reserve(16 + 4 * dim * steps);
  out.append(kFeatureMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u32(out, static_cast<std::uint32_t>(steps));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t d = 0; d < dim; ++d) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(features(d, t))));
    }
  }
  return out;
}

Matrix decode_features(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw DataError(origin + ": not a TRKF feature file");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureVersion) {
    throw DataError(origin + ": unsupported feature file version " + std::to_string(version));
  }
  const std::size_t dim = get_u32(bytes, 8), steps = get_u32(bytes, 12);
  if (dim == 0 || steps == 0) throw DataError(origin + ": empty feature matrix");
  if (bytes.size() != 16 + 4 * dim * steps) {
    throw DataError(origin + ": expected " + std::to_string(16 + 4 * dim * steps) +
                    " bytes for " + shape_string(dim, steps) + ", found " +
                    std::to_string(bytes.size()));
  }
  Matrix m(dim, steps);
  std::size_t off = 16;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t d = 0; d < dim; ++d, off += 4) {
      m(d, t) = static_cast<double>(std::bit_cast<float>(get_u32(bytes, off)));
    }
  }
  return m;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("failed reading " + path.string());
  return std::move(ss).str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_feature_file(const fs::path& path, const Matrix& features) {
  write_file(path, encode_features(features));
}

Matrix read_feature_file(const fs::path& path) {
  return decode_features(read_file(path), path.string());
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& v : videos) {
    if (!ids.insert(v.id).second) throw DataError("duplicate video id '" + v.id + "'");
    if (v.tracklets.empty()) throw DataError("video '" + v.id + "' has no tracklets");
    bool all_labeled = true;
    int fakes = 0;
    for (const auto& t : v.tracklets) {
      if (t.label) {
        fakes += *t.label;
      } else {
        all_labeled = false;
      }
    }
    if (v.label == 0 && fakes > 0) {
      throw DataError("real video '" + v.id + "' contains a fake tracklet");
    }
    if (v.label == 1 && all_labeled && fakes == 0) {
      throw DataError("fake video '" + v.id + "' contains no fake tracklet");
    }
  }
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json videos = json::array();
  for (const auto& v : manifest.videos) {
    json tracklets = json::array();
    for (const auto& t : v.tracklets) {
      json jt = {{"id", t.id}, {"path", t.path}, {"frames", t.frames}};
      if (t.label) jt["label"] = label_name(*t.label);
      tracklets.push_back(std::move(jt));
    }
    videos.push_back({{"id", v.id}, {"label", label_name(v.label)}, {"tracklets", std::move(tracklets)}});
  }
  json doc = {{"split", manifest.split}, {"videos", std::move(videos)}};
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text, const std::string& origin) {
  DatasetManifest m;
  try {
    const json doc = json::parse(text);
    m.split = doc.value("split", std::string{});
    for (const auto& jv : doc.at("videos")) {
      VideoRecord v;
      v.id = jv.at("id").get<std::string>();
      v.label = parse_label(jv.at("label").get<std::string>(), origin);
      for (const auto& jt : jv.at("tracklets")) {
        TrackletRecord t;
        t.id = jt.at("id").get<std::string>();
        t.path = jt.at("path").get<std::string>();
        t.frames = jt.at("frames").get<std::size_t>();
        if (jt.contains("label")) t.label = parse_label(jt.at("label").get<std::string>(), origin);
        v.tracklets.push_back(std::move(t));
      }
      m.videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw DataError(origin + ": malformed manifest: " + e.what());
  }
  m.validate();
  return m;
}

fs::path write_dataset(const fs::path& dir, const Dataset& dataset) {
  DatasetManifest manifest;
  manifest.split = dataset.split;
  for (const auto& bag : dataset.bags) {
    VideoRecord v;
    v.id = bag.id;
    v.label = bag.label;
    for (const auto& tr : bag.tracklets) {
      const fs::path rel = fs::path("features") / dataset.split / bag.id / (tr.id + ".trkf");
      write_feature_file(dir / rel, tr.features);
      TrackletRecord t;
      t.id = tr.id;
      t.path = rel.generic_string();
      t.frames = tr.frames();
      if (tr.label >= 0) t.label = tr.label;
      v.tracklets.push_back(std::move(t));
    }
    manifest.videos.push_back(std::move(v));
  }
  manifest.validate();
  const fs::path manifest_path = dir / (dataset.split + ".json");
  write_file(manifest_path, manifest_to_json(manifest));
  return manifest_path;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest manifest = manifest_from_json(read_file(manifest_path), manifest_path.string());
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  ds.split = manifest.split;
  std::size_t dim = 0;
  for (const auto& v : manifest.videos) {
    Bag bag;
    bag.id = v.id;
    bag.label = v.label;
    for (const auto& t : v.tracklets) {
      const fs::path p = base / t.path;
      Tracklet tr;
      tr.id = t.id;
      tr.label = t.label.value_or(-1);
      tr.features = read_feature_file(p);
      if (tr.frames() != t.frames) {
        throw DataError(p.string() + ": manifest says " + std::to_string(t.frames) +
                        " frames, file holds " + std::to_string(tr.frames()));
      }
      if (dim == 0) dim = tr.dim();
      if (tr.dim() != dim) {
        throw DataError(p.string() + ": feature dimension " + std::to_string(tr.dim()) +
                        " differs from " + std::to_string(dim));
      }
      bag.tracklets.push_back(std::move(tr));
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

}  // namespace milfd
