#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "milfd/binding.hpp"
#include "milfd/matrix.hpp"
#include "milfd/parameter.hpp"
#include "milfd/rng.hpp"
#include "milfd/tape.hpp"

namespace milfd {

// One face track: D x T features, frame t in column t.
struct Tracklet {
  std::string id;
  Matrix features;
  // Face-level ground truth for evaluation only; no training path reads it.
  int label = -1;  // -1 unknown, 0 real, 1 fake

  std::size_t dim() const noexcept { return features.rows(); }
  std::size_t frames() const noexcept { return features.cols(); }
};

enum class InstanceVariant { full, max_pool_only, avg_pool_only, no_short_term, no_long_term };

InstanceVariant parse_instance_variant(std::string_view name);
std::string_view to_string(InstanceVariant v);

// Normalization used in place of batch norm inside each dilated block.
//   frame:   per frame across channels (temporally local, default)
//   channel: per channel across the tracklet's frames
enum class NormMode { frame, channel };

NormMode parse_norm_mode(std::string_view name);
std::string_view to_string(NormMode m);

struct ShortTermConfig {
  std::size_t num_layers = 3;
  std::vector<std::size_t> rates{1, 2, 4};
  std::size_t kernel_size = 3;
  std::size_t bottleneck_divisor = 4;
  NormMode norm = NormMode::frame;

  void validate() const;
  // ceil(layer * dim / divisor), layer is 1-based.
  std::size_t bottleneck_width(std::size_t layer, std::size_t dim) const;
  // Frames on each side that can influence one output frame.
  std::size_t receptive_half_width() const;
};

// Adds the dense dilated block's parameters under "<prefix>l<l>.*".
void init_short_term_params(ParameterSet& params, std::string_view prefix, std::size_t dim,
                            const ShortTermConfig& cfg, Rng& rng);

// S_l = F_l([S_0, ..., S_{l-1}]), S_0 = X; returns S_L (D x T).
Var short_term_aggregate(Var x, const ShortTermConfig& cfg, ParamBinding& params,
                         std::string_view prefix);

// L = S * softmax_columns(S^T S) + S.
Var long_term_aggregate(Var s);
// Same as long_term_aggregate, also exposing the T x T attention matrix.
Var long_term_aggregate(Var s, Var* attention);

// Y[d] = max_t L[d, t].
Var global_aggregate(Var l);

Var aggregate_instance(Var x, const ShortTermConfig& cfg, ParamBinding& params,
                       std::string_view prefix, InstanceVariant variant);

bool uses_short_term(InstanceVariant v);

}  // namespace milfd
