#include "milfd/instance_agg.hpp"

#include <cmath>

#include "milfd/error.hpp"
#include "milfd/ops.hpp"

namespace milfd {
namespace {

std::string key(std::string_view prefix, std::size_t layer, std::string_view leaf) {
  return std::string(prefix) + "l" + std::to_string(layer) + "." + std::string(leaf);
}

Matrix uniform_fan_in(Rng& rng, std::size_t rows, std::size_t fan_in, std::size_t k) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in * k));
  Matrix m(rows, fan_in * k);
  for (auto& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

void add_norm(ParameterSet& params, const std::string& base, std::size_t width) {
  params.add(base + ".scale", Matrix(width, 1, 1.0));
  params.add(base + ".shift", Matrix(width, 1, 0.0));
}

Var norm(Var x, ParamBinding& params, const std::string& base, NormMode mode) {
  Var scale = params(base + ".scale");
  Var shift = params(base + ".shift");
  return mode == NormMode::frame ? frame_norm(x, scale, shift) : channel_norm(x, scale, shift);
}

}  // namespace

InstanceVariant parse_instance_variant(std::string_view name) {
  if (name == "full") return InstanceVariant::full;
  if (name == "max_pool_only") return InstanceVariant::max_pool_only;
  if (name == "avg_pool_only") return InstanceVariant::avg_pool_only;
  if (name == "no_short_term") return InstanceVariant::no_short_term;
  if (name == "no_long_term") return InstanceVariant::no_long_term;
  throw ConfigError("unknown instance variant '" + std::string(name) + "'");
}

std::string_view to_string(InstanceVariant v) {
  switch (v) {
    case InstanceVariant::full: return "full";
    case InstanceVariant::max_pool_only: return "max_pool_only";
    case InstanceVariant::avg_pool_only: return "avg_pool_only";
    case InstanceVariant::no_short_term: return "no_short_term";
    case InstanceVariant::no_long_term: return "no_long_term";
  }
  return "full";
}

NormMode parse_norm_mode(std::string_view name) {
  if (name == "frame") return NormMode::frame;
  if (name == "channel") return NormMode::channel;
  throw ConfigError("unknown norm mode '" + std::string(name) + "'");
}

std::string_view to_string(NormMode m) { return m == NormMode::frame ? "frame" : "channel"; }

bool uses_short_term(InstanceVariant v) {
  return v == InstanceVariant::full || v == InstanceVariant::no_long_term;
}

void ShortTermConfig::validate() const {
  if (num_layers == 0) throw ConfigError("short-term block needs at least one layer");
  if (rates.size() != num_layers) {
    throw ConfigError("short-term rates list has " + std::to_string(rates.size()) +
                      " entries for " + std::to_string(num_layers) + " layers");
  }
  for (std::size_t r : rates)
    if (r == 0) throw ConfigError("dilation rates must be >= 1");
  if (kernel_size % 2 == 0) {
    throw ConfigError("temporal kernel size must be odd, got " + std::to_string(kernel_size));
  }
  if (bottleneck_divisor == 0) throw ConfigError("bottleneck divisor must be positive");
}

std::size_t ShortTermConfig::bottleneck_width(std::size_t layer, std::size_t dim) const {
  return (layer * dim + bottleneck_divisor - 1) / bottleneck_divisor;
}

std::size_t ShortTermConfig::receptive_half_width() const {
  std::size_t total = 0;
  for (std::size_t r : rates) total += r;
  return (kernel_size - 1) / 2 * total;
}

void init_short_term_params(ParameterSet& params, std::string_view prefix, std::size_t dim,
                            const ShortTermConfig& cfg, Rng& rng) {
  cfg.validate();
  for (std::size_t l = 1; l <= cfg.num_layers; ++l) {
    const std::size_t in = l * dim;
    const std::size_t mid = cfg.bottleneck_width(l, dim);
    add_norm(params, key(prefix, l, "norm_in"), in);
    params.add(key(prefix, l, "reduce"), uniform_fan_in(rng, mid, in, 1));
    add_norm(params, key(prefix, l, "norm_mid"), mid);
    params.add(key(prefix, l, "temporal"), uniform_fan_in(rng, mid, mid, cfg.kernel_size));
    add_norm(params, key(prefix, l, "norm_out"), mid);
    params.add(key(prefix, l, "expand"), uniform_fan_in(rng, dim, mid, 1));
  }
}

Var short_term_aggregate(Var x, const ShortTermConfig& cfg, ParamBinding& params,
                         std::string_view prefix) {
  cfg.validate();
  const std::size_t dim = x.rows();
  std::vector<Var> dense{x};
  Var s = x;
  for (std::size_t l = 1; l <= cfg.num_layers; ++l) {
    Var in = dense.size() == 1 ? dense.front() : concat_rows(dense);
    Var reduce = params(key(prefix, l, "reduce"));
    Var temporal = params(key(prefix, l, "temporal"));
    Var expand = params(key(prefix, l, "expand"));
    const std::size_t mid = cfg.bottleneck_width(l, dim);
    if (reduce.rows() != mid || reduce.cols() != in.rows() || expand.rows() != dim) {
      throw ConfigError("short-term layer " + std::to_string(l) + " parameters " +
                        reduce.value().shape_string() + "/" + expand.value().shape_string() +
                        " do not fit input " + in.value().shape_string());
    }
    Var h = relu(norm(in, params, key(prefix, l, "norm_in"), cfg.norm));
    h = matmul(reduce, h);
    h = relu(norm(h, params, key(prefix, l, "norm_mid"), cfg.norm));
    h = conv1d_dilated(h, temporal, cfg.kernel_size, cfg.rates[l - 1]);
    h = norm(h, params, key(prefix, l, "norm_out"), cfg.norm);
    s = matmul(expand, h);
    dense.push_back(s);
  }
  return s;
}

Var long_term_aggregate(Var s, Var* attention) {
  Var a = softmax_columns(matmul(transpose(s), s));
  if (attention != nullptr) *attention = a;
  return add(matmul(s, a), s);
}

Var long_term_aggregate(Var s) { return long_term_aggregate(s, nullptr); }

Var global_aggregate(Var l) { return maxpool_time(l); }

Var aggregate_instance(Var x, const ShortTermConfig& cfg, ParamBinding& params,
                       std::string_view prefix, InstanceVariant variant) {
  switch (variant) {
    case InstanceVariant::full:
      return global_aggregate(long_term_aggregate(short_term_aggregate(x, cfg, params, prefix)));
    case InstanceVariant::max_pool_only:
      return maxpool_time(x);
    case InstanceVariant::avg_pool_only:
      return meanpool_time(x);
    case InstanceVariant::no_short_term:
      return global_aggregate(long_term_aggregate(x));
    case InstanceVariant::no_long_term:
      return global_aggregate(short_term_aggregate(x, cfg, params, prefix));
  }
  throw ConfigError("unknown instance variant");
}

}  // namespace milfd
