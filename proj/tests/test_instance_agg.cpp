#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "milfd/error.hpp"
#include "milfd/instance_agg.hpp"
#include "milfd/ops.hpp"

using namespace milfd;
using milfd::testing::random_matrix;

namespace {

constexpr std::string_view kPrefix = "short.";

ParameterSet make_params(std::size_t dim, const ShortTermConfig& cfg, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(seed);
  init_short_term_params(ps, kPrefix, dim, cfg, rng);
  return ps;
}

Matrix run_short_term(const ParameterSet& ps, const ShortTermConfig& cfg, const Matrix& x) {
  Tape t;
  ParamBinding bind(t, ps);
  return short_term_aggregate(t.constant(x), cfg, bind, kPrefix).value();
}

}  // namespace

TEST_CASE("short-term config validation") {
  ShortTermConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.receptive_half_width() == 7);
  CHECK(cfg.bottleneck_width(1, 64) == 16);
  CHECK(cfg.bottleneck_width(3, 5) == 4);  // ceil(15 / 4)

  ShortTermConfig bad = cfg;
  bad.rates = {1, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.rates = {1, 0, 4};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("dense connectivity widens each layer's input") {
  ShortTermConfig cfg;
  const std::size_t dim = 8;
  ParameterSet ps = make_params(dim, cfg, 1);
  CHECK(ps.at("short.l1.reduce").value.cols() == dim);
  CHECK(ps.at("short.l2.reduce").value.cols() == 2 * dim);
  CHECK(ps.at("short.l3.reduce").value.cols() == 3 * dim);
  CHECK(ps.at("short.l3.norm_in.scale").value.rows() == 3 * dim);
  CHECK(ps.at("short.l3.temporal").value.cols() == cfg.bottleneck_width(3, dim) * 3);
  CHECK(ps.at("short.l2.expand").value.rows() == dim);
}

TEST_CASE("zero conv weights and shifts give a zero output") {
  ShortTermConfig cfg;
  ParameterSet ps = make_params(6, cfg, 2);
  for (auto& p : ps)
    if (!p.name.ends_with(".scale")) p.value.fill(0.0);
  Rng rng(3);
  const Matrix x = random_matrix(rng, 6, 9);
  const Matrix s = run_short_term(ps, cfg, x);
  CHECK(s.rows() == 6);
  CHECK(s.cols() == 9);
  for (double v : s.data()) CHECK(v == 0.0);
}

TEST_CASE("short-term output is local within the receptive field") {
  ShortTermConfig cfg;
  const std::size_t dim = 5, steps = 24;
  Rng rng(77);
  bool reached_edge = false;
  for (int trial = 0; trial < 20; ++trial) {
    ParameterSet ps = make_params(dim, cfg, 100 + trial);
    milfd::testing::randomize(ps, rng);
    const Matrix x = random_matrix(rng, dim, steps);
    const std::size_t t0 = static_cast<std::size_t>(rng.below(steps));
    Matrix x2 = x;
    for (std::size_t r = 0; r < dim; ++r) x2(r, t0) += rng.normal(0.0, 1.0);
    const Matrix a = run_short_term(ps, cfg, x);
    const Matrix b = run_short_term(ps, cfg, x2);
    for (std::size_t t = 0; t < steps; ++t) {
      double diff = 0.0;
      for (std::size_t r = 0; r < dim; ++r) diff = std::max(diff, std::abs(a(r, t) - b(r, t)));
      const std::size_t dist = t > t0 ? t - t0 : t0 - t;
      if (dist > 7) CHECK(diff == 0.0);
      if (dist == 7 && diff > 0.0) reached_edge = true;
    }
  }
  CHECK(reached_edge);
}

TEST_CASE("channel norm mode couples every frame") {
  ShortTermConfig cfg;
  cfg.norm = NormMode::channel;
  const std::size_t dim = 4, steps = 20;
  ParameterSet ps = make_params(dim, cfg, 9);
  Rng rng(10);
  const Matrix x = random_matrix(rng, dim, steps);
  Matrix x2 = x;
  x2(0, 0) += 1.0;
  const Matrix a = run_short_term(ps, cfg, x);
  const Matrix b = run_short_term(ps, cfg, x2);
  double far = 0.0;
  for (std::size_t r = 0; r < dim; ++r) far = std::max(far, std::abs(a(r, steps - 1) - b(r, steps - 1)));
  CHECK(far > 0.0);
}

TEST_CASE("long-term aggregation") {
  SUBCASE("zero input") {
    Tape t;
    Var a;
    Var l = long_term_aggregate(t.constant(Matrix(3, 4)), &a);
    for (double v : l.value().data()) CHECK(v == 0.0);
    for (double v : a.value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("single frame doubles") {
    Tape t;
    Matrix s{{1.5}, {-2.0}};
    Var a;
    Var l = long_term_aggregate(t.constant(s), &a);
    CHECK(a.value() == Matrix{{1.0}});
    CHECK(l.value() == Matrix{{3.0}, {-4.0}});
  }
  SUBCASE("residual identity against direct recomputation") {
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix s = random_matrix(rng, 4, 6);
      Tape t;
      Var a;
      const Matrix l = long_term_aggregate(t.constant(s), &a).value();
      // Independent recomputation of A = softmax over columns of S^T S.
      Matrix ref(6, 6);
      for (std::size_t j = 0; j < 6; ++j) {
        std::vector<double> col(6);
        for (std::size_t i = 0; i < 6; ++i) {
          double dot = 0.0;
          for (std::size_t d = 0; d < 4; ++d) dot += s(d, i) * s(d, j);
          col[i] = dot;
        }
        const double mx = *std::max_element(col.begin(), col.end());
        double total = 0.0;
        for (double& v : col) total += (v = std::exp(v - mx));
        double colsum = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
          ref(i, j) = col[i] / total;
          CHECK(a.value()(i, j) >= 0.0);
          CHECK(a.value()(i, j) <= 1.0);
          colsum += a.value()(i, j);
        }
        CHECK(std::abs(colsum - 1.0) <= 1e-12);
      }
      for (std::size_t d = 0; d < 4; ++d) {
        for (std::size_t j = 0; j < 6; ++j) {
          double sa = 0.0;
          for (std::size_t i = 0; i < 6; ++i) sa += s(d, i) * ref(i, j);
          CHECK(std::abs((l(d, j) - s(d, j)) - sa) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("global aggregation") {
  Tape t;
  CHECK(global_aggregate(t.constant(Matrix{{1, 3}, {2, 0}})).value() == Matrix{{3}, {2}});
  Rng rng(4);
  const Matrix l = random_matrix(rng, 3, 7);
  Matrix permuted(3, 7);
  for (std::size_t c = 0; c < 7; ++c)
    for (std::size_t r = 0; r < 3; ++r) permuted(r, c) = l(r, (c * 3 + 2) % 7);
  const Matrix y1 = global_aggregate(t.constant(l)).value();
  const Matrix y2 = global_aggregate(t.constant(permuted)).value();
  CHECK(y1 == y2);
  auto fn = [](Tape&, const std::vector<Var>& v) {
    return sum(hadamard(global_aggregate(v[0]), v[0].tape()->constant(Matrix{{1}, {-2}, {0.5}})));
  };
  CHECK(milfd::testing::gradient_check(fn, {l}) <= 1e-4);
}

TEST_CASE("instance variants") {
  ShortTermConfig cfg;
  CHECK(parse_instance_variant("no_long_term") == InstanceVariant::no_long_term);
  CHECK(to_string(InstanceVariant::avg_pool_only) == "avg_pool_only");
  CHECK_THROWS_AS(parse_instance_variant("median"), ConfigError);

  ParameterSet empty;
  Tape t;
  ParamBinding bind(t, std::as_const(empty));
  CHECK(aggregate_instance(t.constant(Matrix{{1, 5, 2}}), cfg, bind, kPrefix,
                           InstanceVariant::max_pool_only)
            .value() == Matrix{{5}});
  CHECK(aggregate_instance(t.constant(Matrix{{1, 5, 3}}), cfg, bind, kPrefix,
                           InstanceVariant::avg_pool_only)
            .value() == Matrix{{3}});

  const std::size_t dim = 6;
  ParameterSet ps = make_params(dim, cfg, 12);
  Rng rng(13);
  for (std::size_t steps : {1u, 5u, 64u}) {
    const Matrix x = random_matrix(rng, dim, steps);
    for (auto v : {InstanceVariant::full, InstanceVariant::no_short_term,
                   InstanceVariant::no_long_term}) {
      Tape tt;
      ParamBinding b(tt, std::as_const(ps));
      Var y = aggregate_instance(tt.constant(x), cfg, b, kPrefix, v);
      CHECK(y.rows() == dim);
      CHECK(y.cols() == 1);
      CHECK(y.value().all_finite());
    }
  }
}

TEST_CASE("single-frame tracklets are deterministic and input-sensitive") {
  ShortTermConfig cfg;
  const std::size_t dim = 6;
  ParameterSet ps = make_params(dim, cfg, 21);
  Rng rng(22);
  const Matrix x1 = random_matrix(rng, dim, 1);
  const Matrix x2 = random_matrix(rng, dim, 1);
  auto run = [&](const Matrix& x) {
    Tape t;
    ParamBinding b(t, std::as_const(ps));
    return aggregate_instance(t.constant(x), cfg, b, kPrefix, InstanceVariant::full).value();
  };
  CHECK(run(x1) == run(x1));
  CHECK(run(x1) != run(x2));
}

TEST_CASE("instance aggregation gradients") {
  ShortTermConfig cfg;
  const std::size_t dim = 4, steps = 6;
  Rng rng(55);
  for (auto variant : {InstanceVariant::full, InstanceVariant::no_short_term,
                       InstanceVariant::no_long_term}) {
    for (NormMode mode : {NormMode::frame, NormMode::channel}) {
      cfg.norm = mode;
      ParameterSet ps = make_params(dim, cfg, 60);
      milfd::testing::randomize(ps, rng, 0.4);
      const Matrix x = random_matrix(rng, dim, steps, 0.5);
      const Matrix mask = random_matrix(rng, dim, 1);
      auto fn = [&](ParamBinding& b) {
        Var y = aggregate_instance(b.tape().constant(x), cfg, b, kPrefix, variant);
        return sum(hadamard(y, b.tape().constant(mask)));
      };
      if (uses_short_term(variant)) {
        CHECK(milfd::testing::param_gradient_check(ps, fn) <= 1e-4);
      }
      auto fx = [&](Tape&, const std::vector<Var>& v) {
        ParamBinding b(*v[0].tape(), std::as_const(ps));
        Var y = aggregate_instance(v[0], cfg, b, kPrefix, variant);
        return sum(hadamard(y, v[0].tape()->constant(mask)));
      };
      CHECK(milfd::testing::gradient_check(fx, {x}) <= 1e-4);
    }
  }
}
