#include "milfd/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "milfd/config_json.hpp"
#include "milfd/dataset_io.hpp"
#include "milfd/error.hpp"

namespace milfd {
namespace {

using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw DimensionError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

// Bounds-checked little-endian reader.
class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::string_view take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw DataError(origin_ + ": truncated checkpoint while reading " + what);
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint64_t uint(std::size_t width, const char* what) {
    const std::string_view b = take(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(uint(4, what)); }
  std::uint64_t u64(const char* what) { return uint(8, what); }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

json parse_config(const Checkpoint& ckpt, const std::string& origin, const char* kind) {
  json j;
  try {
    j = json::parse(ckpt.config_json);
  } catch (const json::exception& e) {
    throw DataError(origin + ": checkpoint config is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("kind", std::string{}) != kind) {
    throw DataError(origin + ": expected a '" + kind + "' checkpoint");
  }
  return j;
}

// Every expected parameter must be present with the expected shape, and
// nothing else may be.
ParameterSet match_layout(const ParameterSet& expected, const ParameterSet& stored,
                          const std::string& origin) {
  if (expected.size() != stored.size()) {
    throw DataError(origin + ": checkpoint holds " + std::to_string(stored.size()) +
                    " parameters, config implies " + std::to_string(expected.size()));
  }
  ParameterSet out;
  for (const auto& want : expected) {
    const Parameter* have = stored.find(want.name);
    if (!have) throw DataError(origin + ": checkpoint is missing parameter '" + want.name + "'");
    if (!have->value.same_shape(want.value)) {
      throw DataError(origin + ": parameter '" + want.name + "' is " + have->value.shape_string() +
                      ", config implies " + want.value.shape_string());
    }
    out.add(want.name, have->value);
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string encode_checkpoint(std::string_view config_json, const ParameterSet& params) {
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, to_u32(config_json.size(), "checkpoint config"));
  out.append(config_json);
  put_u32(out, to_u32(params.size(), "parameter count"));
  for (const auto& p : params) {
    put_u32(out, to_u32(p.name.size(), "parameter name"));
    out.append(p.name);
    put_u32(out, 2);
    put_u32(out, to_u32(p.value.rows(), "rows"));
    put_u32(out, to_u32(p.value.cols(), "cols"));
    for (double v : p.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 8 + 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw DataError(origin + ": not a MILC checkpoint");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8), origin);
  if (tail.u64("checksum") != fnv1a64(body)) throw DataError(origin + ": checkpoint checksum mismatch");

  Reader r(body, origin);
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_json = std::string(r.take(r.u32("config length"), "config"));
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name(r.take(r.u32("name length"), "parameter name"));
    const std::uint32_t rank = r.u32("rank");
    if (rank != 2) throw DataError(origin + ": parameter '" + name + "' has rank " + std::to_string(rank));
    const std::size_t rows = r.u32("rows"), cols = r.u32("cols");
    if (rows != 0 && cols > r.remaining() / 8 / rows) {
      throw DataError(origin + ": truncated checkpoint while reading '" + name + "'");
    }
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = std::bit_cast<double>(r.u64("values"));
    try {
      ckpt.params.add(std::move(name), std::move(m));
    } catch (const ConfigError& err) {
      throw DataError(origin + ": " + err.what());
    }
  }
  if (r.remaining() != 0) throw DataError(origin + ": trailing bytes after the last parameter");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, std::string_view config_json,
                     const ParameterSet& params) {
  write_file(path, encode_checkpoint(config_json, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

std::string model_checkpoint_config(const ModelConfig& cfg, std::string_view train_json) {
  json j = {{"kind", "mil"}, {"model", to_json(cfg)}};
  if (!train_json.empty()) j["train"] = json::parse(train_json);
  return j.dump();
}

void save_model(const std::filesystem::path& path, const Model& model, std::string_view train_json) {
  save_checkpoint(path, model_checkpoint_config(model.config(), train_json), model.params());
}

Model model_from_checkpoint(const Checkpoint& ckpt, const std::string& origin) {
  const json j = parse_config(ckpt, origin, "mil");
  ModelConfig cfg;
  try {
    apply_json(j.at("model"), cfg);
    cfg.validate();
  } catch (const std::exception& e) {
    throw DataError(origin + ": bad model config: " + e.what());
  }
  const Model layout = Model::initialize(cfg, 0);
  return Model(cfg, match_layout(layout.params(), ckpt.params, origin));
}

Model load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint(path), path.string());
}

void save_qnet(const std::filesystem::path& path, const QNet& net) {
  const json j = {{"kind", "qnet"}, {"qnet", to_json(net.config())}};
  save_checkpoint(path, j.dump(), net.params());
}

QNet qnet_from_checkpoint(const Checkpoint& ckpt, const std::string& origin) {
  const json j = parse_config(ckpt, origin, "qnet");
  QNetConfig cfg;
  try {
    apply_json(j.at("qnet"), cfg);
    cfg.validate();
  } catch (const std::exception& e) {
    throw DataError(origin + ": bad qnet config: " + e.what());
  }
  const QNet layout = QNet::initialize(cfg, 0);
  return QNet(cfg, match_layout(layout.params(), ckpt.params, origin));
}

QNet load_qnet(const std::filesystem::path& path) {
  return qnet_from_checkpoint(load_checkpoint(path), path.string());
}

}  // namespace milfd
