#include "milfd/config_json.hpp"

#include <set>
#include <string>

#include "milfd/error.hpp"

namespace milfd {
namespace {

using nlohmann::json;

void require_object(const json& j, const char* what, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(std::string("unknown ") + what + " config key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename Enum, typename Parse>
void read_enum(const json& j, const char* key, Enum& out, Parse parse) {
  std::string name;
  read(j, key, name);
  if (!name.empty()) out = parse(name);
}

}  // namespace

json to_json(const ShortTermConfig& cfg) {
  return {{"layers", cfg.num_layers},
          {"rates", cfg.rates},
          {"kernel_size", cfg.kernel_size},
          {"bottleneck_divisor", cfg.bottleneck_divisor},
          {"norm", to_string(cfg.norm)}};
}

json to_json(const ModelConfig& cfg) {
  return {{"dim", cfg.dim},
          {"attention_width", cfg.attention_width},
          {"short_term", to_json(cfg.short_term)},
          {"instance_variant", to_string(cfg.instance_variant)},
          {"bag_variant", to_string(cfg.bag_variant)},
          {"sparsity_target", to_string(cfg.sparsity_target)}};
}

json to_json(const QNetConfig& cfg) {
  return {{"feature_dim", cfg.feature_dim},
          {"hidden", cfg.hidden},
          {"domains", cfg.domains},
          {"alpha", cfg.alpha}};
}

json to_json(const SyntheticConfig& cfg) {
  json j = {{"videos", cfg.videos},     {"dim", cfg.dim},
            {"frames", cfg.frames},     {"k_min", cfg.k_min},
            {"k_max", cfg.k_max},       {"fake_video_ratio", cfg.fake_video_ratio},
            {"amplitude", cfg.amplitude}, {"omega", cfg.omega},
            {"noise", cfg.noise},       {"prototype_scale", cfg.prototype_scale},
            {"seed", cfg.seed}};
  j["fake_tracklet_ratio"] = cfg.fake_tracklet_ratio ? json(*cfg.fake_tracklet_ratio) : json(nullptr);
  return j;
}

void apply_json(const json& j, ShortTermConfig& cfg) {
  require_object(j, "short-term", {"layers", "rates", "kernel_size", "bottleneck_divisor", "norm"});
  read(j, "layers", cfg.num_layers);
  read(j, "rates", cfg.rates);
  read(j, "kernel_size", cfg.kernel_size);
  read(j, "bottleneck_divisor", cfg.bottleneck_divisor);
  read_enum(j, "norm", cfg.norm, parse_norm_mode);
}

void apply_json(const json& j, ModelConfig& cfg) {
  require_object(j, "model", {"dim", "attention_width", "short_term", "instance_variant",
                              "bag_variant", "sparsity_target"});
  read(j, "dim", cfg.dim);
  read(j, "attention_width", cfg.attention_width);
  if (j.contains("short_term")) apply_json(j.at("short_term"), cfg.short_term);
  read_enum(j, "instance_variant", cfg.instance_variant, parse_instance_variant);
  read_enum(j, "bag_variant", cfg.bag_variant, parse_bag_variant);
  read_enum(j, "sparsity_target", cfg.sparsity_target, parse_sparsity_target);
}

void apply_json(const json& j, QNetConfig& cfg) {
  require_object(j, "qnet", {"feature_dim", "hidden", "domains", "alpha"});
  read(j, "feature_dim", cfg.feature_dim);
  read(j, "hidden", cfg.hidden);
  read(j, "domains", cfg.domains);
  read(j, "alpha", cfg.alpha);
}

}  // namespace milfd
