#include "milfd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "milfd/error.hpp"

namespace milfd {
namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + " shape mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename Fwd, typename Deriv>
Var elementwise(Var a, Fwd fwd, Deriv deriv) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(y), {a}, [ia, deriv](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    const Matrix& xv = t.value(ia);
    const Matrix& yv = t.value(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Matrix out = multiply(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) accumulate_a_bt(g, t.value(ib), t.grad_buffer(ia));
    if (t.requires_grad(ib)) accumulate_at_b(t.value(ia), g, t.grad_buffer(ib));
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().transposed(), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  out.add_scaled(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia).add_scaled(g);
    if (t.requires_grad(ib)) t.grad_buffer(ib).add_scaled(g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  out.add_scaled(b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia).add_scaled(g);
    if (t.requires_grad(ib)) t.grad_buffer(ib).add_scaled(g, -1.0);
  });
}

Var scale(Var a, double factor) {
  Matrix out = a.value();
  for (auto& x : out.data()) x *= factor;
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, factor](Tape& t, std::size_t self) {
    t.grad_buffer(ia).add_scaled(t.upstream(self), factor);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape("hadamard", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * t.value(ib)[i];
    }
    if (t.requires_grad(ib)) {
      Matrix& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * t.value(ia)[i];
    }
  });
}

Var add_constant(Var a, const Matrix& c) {
  require_same_shape("add_constant", a.value(), c);
  Matrix out = a.value();
  out.add_scaled(c);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.grad_buffer(ia).add_scaled(t.upstream(self));
  });
}

Var relu(Var a) {
  return elementwise(
      a, [](double x) { return x < 0.0 ? 0.0 : x; },  // NaN passes through
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero parts");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows column mismatch " + parts.front().value().shape_string() +
                           " vs " + p.value().shape_string());
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + offset * cols);
    offset += v.rows();
    ids.push_back(p.id());
  }
  return parts.front().tape()->record(
      std::move(out), parts, [ids = std::move(ids)](Tape& t, std::size_t self) {
        const Matrix& g = t.upstream(self);
        std::size_t off = 0;
        for (std::size_t id : ids) {
          const std::size_t n = t.value(id).size();
          if (t.requires_grad(id)) {
            Matrix& gi = t.grad_buffer(id);
            for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
          }
          off += n;
        }
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero parts");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols row mismatch " + parts.front().value().shape_string() +
                           " vs " + p.value().shape_string());
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    offset += v.cols();
    ids.push_back(p.id());
  }
  return parts.front().tape()->record(
      std::move(out), parts, [ids = std::move(ids)](Tape& t, std::size_t self) {
        const Matrix& g = t.upstream(self);
        std::size_t off = 0;
        for (std::size_t id : ids) {
          const std::size_t w = t.value(id).cols();
          if (t.requires_grad(id)) {
            Matrix& gi = t.grad_buffer(id);
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, off + c);
          }
          off += w;
        }
      });
}

Var softmax_columns(Var m) {
  const Matrix& x = m.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < x.rows(); ++r) mx = std::max(mx, x(r, c));
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      y(r, c) = std::exp(x(r, c) - mx);
      total += y(r, c);
    }
    for (std::size_t r = 0; r < x.rows(); ++r) y(r, c) /= total;
  }
  const std::size_t im = m.id();
  return m.tape()->record(std::move(y), {m}, [im](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    const Matrix& yv = t.value(self);
    Matrix& gx = t.grad_buffer(im);
    for (std::size_t c = 0; c < yv.cols(); ++c) {
      double dot = 0.0;
      for (std::size_t r = 0; r < yv.rows(); ++r) dot += g(r, c) * yv(r, c);
      for (std::size_t r = 0; r < yv.rows(); ++r) gx(r, c) += yv(r, c) * (g(r, c) - dot);
    }
  });
}

Var conv1d_dilated(Var x, Var kernel, std::size_t kernel_size, std::size_t dilation) {
  if (kernel_size % 2 == 0) {
    throw ConfigError("conv1d kernel size must be odd, got " + std::to_string(kernel_size));
  }
  if (dilation == 0) throw ConfigError("conv1d dilation must be positive");
  const Matrix& xv = x.value();
  const Matrix& wv = kernel.value();
  const std::size_t d_in = xv.rows(), steps = xv.cols(), d_out = wv.rows();
  if (wv.cols() != d_in * kernel_size) {
    throw DimensionError("conv1d kernel " + wv.shape_string() + " does not match input " +
                         xv.shape_string() + " with kernel size " + std::to_string(kernel_size));
  }
  const auto half = static_cast<std::ptrdiff_t>(kernel_size / 2);
  const auto T = static_cast<std::ptrdiff_t>(steps);

  Matrix out(d_out, steps);
  for (std::size_t j = 0; j < kernel_size; ++j) {
    const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(j) - half) *
                               static_cast<std::ptrdiff_t>(dilation);
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - off);
    if (t0 >= t1) continue;
    for (std::size_t c = 0; c < d_out; ++c) {
      double* o = out.row(c).data();
      for (std::size_t i = 0; i < d_in; ++i) {
        const double w = wv(c, i * kernel_size + j);
        if (w == 0.0) continue;
        const double* xi = xv.row(i).data();
        for (std::ptrdiff_t t = t0; t < t1; ++t) o[t] += w * xi[t + off];
      }
    }
  }

  const std::size_t ix = x.id(), iw = kernel.id();
  return x.tape()->record(
      std::move(out), {x, kernel},
      [ix, iw, kernel_size, dilation, half, T, d_in, d_out](Tape& t, std::size_t self) {
        const Matrix& g = t.upstream(self);
        const Matrix& xv = t.value(ix);
        const Matrix& wv = t.value(iw);
        const bool need_x = t.requires_grad(ix), need_w = t.requires_grad(iw);
        Matrix* gx = need_x ? &t.grad_buffer(ix) : nullptr;
        Matrix* gw = need_w ? &t.grad_buffer(iw) : nullptr;
        for (std::size_t j = 0; j < kernel_size; ++j) {
          const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(j) - half) *
                                     static_cast<std::ptrdiff_t>(dilation);
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - off);
          if (t0 >= t1) continue;
          for (std::size_t c = 0; c < d_out; ++c) {
            const double* gc = g.row(c).data();
            for (std::size_t i = 0; i < d_in; ++i) {
              const std::size_t col = i * kernel_size + j;
              if (gw != nullptr) {
                const double* xi = xv.row(i).data();
                double s = 0.0;
                for (std::ptrdiff_t tt = t0; tt < t1; ++tt) s += gc[tt] * xi[tt + off];
                (*gw)(c, col) += s;
              }
              if (gx != nullptr) {
                const double w = wv(c, col);
                if (w == 0.0) continue;
                double* gxi = gx->row(i).data();
                for (std::ptrdiff_t tt = t0; tt < t1; ++tt) gxi[tt + off] += w * gc[tt];
              }
            }
          }
        }
      });
}

Var maxpool_time(Var m) {
  const Matrix& x = m.value();
  if (x.cols() == 0) throw DimensionError("maxpool_time on zero-length input");
  Matrix out(x.rows(), 1);
  std::vector<std::size_t> argmax(x.rows(), 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double best = x(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) {
      if (x(r, c) > best) {
        best = x(r, c);
        argmax[r] = c;
      }
    }
    out(r, 0) = best;
  }
  const std::size_t im = m.id();
  return m.tape()->record(std::move(out), {m},
                          [im, argmax = std::move(argmax)](Tape& t, std::size_t self) {
                            const Matrix& g = t.upstream(self);
                            Matrix& gx = t.grad_buffer(im);
                            for (std::size_t r = 0; r < g.rows(); ++r) gx(r, argmax[r]) += g(r, 0);
                          });
}

Var meanpool_time(Var m) {
  const Matrix& x = m.value();
  if (x.cols() == 0) throw DimensionError("meanpool_time on zero-length input");
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out(r, 0) = s / static_cast<double>(x.cols());
  }
  const std::size_t im = m.id();
  return m.tape()->record(std::move(out), {m}, [im](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    Matrix& gx = t.grad_buffer(im);
    const double inv = 1.0 / static_cast<double>(gx.cols());
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (double& v : gx.row(r)) v += g(r, 0) * inv;
  });
}

Var gradient_reversal(Var m, double alpha) {
  if (!(alpha > 0.0)) {
    throw ConfigError("gradient_reversal alpha must be positive, got " + std::to_string(alpha));
  }
  const std::size_t im = m.id();
  return m.tape()->record(m.value(), {m}, [im, alpha](Tape& t, std::size_t self) {
    t.grad_buffer(im).add_scaled(t.upstream(self), -alpha);
  });
}

Var stop_gradient(Var m) { return m.tape()->constant(m.value()); }

Var channel_norm(Var x, Var scale, Var shift, double eps) {
  const Matrix& xv = x.value();
  const std::size_t d = xv.rows(), steps = xv.cols();
  if (scale.rows() != d || scale.cols() != 1 || shift.rows() != d || shift.cols() != 1) {
    throw DimensionError("channel_norm scale/shift " + scale.value().shape_string() + "/" +
                         shift.value().shape_string() + " do not match input " +
                         xv.shape_string());
  }
  const Matrix& gamma = scale.value();
  const Matrix& beta = shift.value();
  Matrix xhat(d, steps);
  Matrix inv_std(d, 1);
  Matrix out(d, steps);
  const double n = static_cast<double>(steps);
  for (std::size_t r = 0; r < d; ++r) {
    double mean = 0.0;
    for (double v : xv.row(r)) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : xv.row(r)) var += (v - mean) * (v - mean);
    var /= n;
    inv_std(r, 0) = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < steps; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std(r, 0);
      out(r, c) = gamma(r, 0) * xhat(r, c) + beta(r, 0);
    }
  }
  const std::size_t ix = x.id(), is = scale.id(), ib = shift.id();
  return x.tape()->record(
      std::move(out), {x, scale, shift},
      [ix, is, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                         std::size_t self) {
        const Matrix& g = t.upstream(self);
        const Matrix& gamma = t.value(is);
        const std::size_t d = g.rows(), steps = g.cols();
        const double n = static_cast<double>(steps);
        for (std::size_t r = 0; r < d; ++r) {
          double g_sum = 0.0, gx_sum = 0.0;
          for (std::size_t c = 0; c < steps; ++c) {
            g_sum += g(r, c);
            gx_sum += g(r, c) * xhat(r, c);
          }
          if (t.requires_grad(ib)) t.grad_buffer(ib)(r, 0) += g_sum;
          if (t.requires_grad(is)) t.grad_buffer(is)(r, 0) += gx_sum;
          if (t.requires_grad(ix)) {
            Matrix& gx = t.grad_buffer(ix);
            const double k = gamma(r, 0) * inv_std(r, 0);
            const double g_mean = g_sum / n, gx_mean = gx_sum / n;
            for (std::size_t c = 0; c < steps; ++c)
              gx(r, c) += k * (g(r, c) - g_mean - xhat(r, c) * gx_mean);
          }
        }
      });
}

Var frame_norm(Var x, Var scale, Var shift, double eps) {
  const Matrix& xv = x.value();
  const std::size_t d = xv.rows(), steps = xv.cols();
  if (scale.rows() != d || scale.cols() != 1 || shift.rows() != d || shift.cols() != 1) {
    throw DimensionError("frame_norm scale/shift " + scale.value().shape_string() + "/" +
                         shift.value().shape_string() + " do not match input " +
                         xv.shape_string());
  }
  const Matrix& gamma = scale.value();
  const Matrix& beta = shift.value();
  Matrix xhat(d, steps);
  std::vector<double> inv_std(steps);
  Matrix out(d, steps);
  const double n = static_cast<double>(d);
  for (std::size_t c = 0; c < steps; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < d; ++r) mean += xv(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < d; ++r) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    inv_std[c] = 1.0 / std::sqrt(var / n + eps);
    for (std::size_t r = 0; r < d; ++r) xhat(r, c) = (xv(r, c) - mean) * inv_std[c];
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < steps; ++c) out(r, c) = gamma(r, 0) * xhat(r, c) + beta(r, 0);

  const std::size_t ix = x.id(), is = scale.id(), ib = shift.id();
  return x.tape()->record(
      std::move(out), {x, scale, shift},
      [ix, is, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                         std::size_t self) {
        const Matrix& g = t.upstream(self);
        const Matrix& gamma = t.value(is);
        const std::size_t d = g.rows(), steps = g.cols();
        if (t.requires_grad(ib) || t.requires_grad(is)) {
          for (std::size_t r = 0; r < d; ++r) {
            double g_sum = 0.0, gx_sum = 0.0;
            for (std::size_t c = 0; c < steps; ++c) {
              g_sum += g(r, c);
              gx_sum += g(r, c) * xhat(r, c);
            }
            if (t.requires_grad(ib)) t.grad_buffer(ib)(r, 0) += g_sum;
            if (t.requires_grad(is)) t.grad_buffer(is)(r, 0) += gx_sum;
          }
        }
        if (!t.requires_grad(ix)) return;
        Matrix& gx = t.grad_buffer(ix);
        const double n = static_cast<double>(d);
        for (std::size_t c = 0; c < steps; ++c) {
          double gh_mean = 0.0, ghx_mean = 0.0;
          for (std::size_t r = 0; r < d; ++r) {
            const double gh = g(r, c) * gamma(r, 0);
            gh_mean += gh;
            ghx_mean += gh * xhat(r, c);
          }
          gh_mean /= n;
          ghx_mean /= n;
          for (std::size_t r = 0; r < d; ++r) {
            gx(r, c) += inv_std[c] * (g(r, c) * gamma(r, 0) - gh_mean - xhat(r, c) * ghx_mean);
          }
        }
      });
}

Var sum(Var m) {
  double s = 0.0;
  for (double v : m.value().data()) s += v;
  const std::size_t im = m.id();
  return m.tape()->record(Matrix(1, 1, s), {m}, [im](Tape& t, std::size_t self) {
    const double g = t.upstream(self)[0];
    for (double& v : t.grad_buffer(im).data()) v += g;
  });
}

Var binary_cross_entropy(Var logit, int label) {
  if (label != 0 && label != 1) {
    throw InputError("binary_cross_entropy label must be 0 or 1, got " + std::to_string(label));
  }
  if (logit.rows() != 1 || logit.cols() != 1) {
    throw DimensionError("binary_cross_entropy expects a 1x1 logit, got " +
                         logit.value().shape_string());
  }
  const double z = logit.value()[0];
  const double y = static_cast<double>(label);
  const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  const std::size_t il = logit.id();
  return logit.tape()->record(Matrix(1, 1, loss), {logit}, [il, y](Tape& t, std::size_t self) {
    const double zz = t.value(il)[0];
    t.grad_buffer(il)[0] += t.upstream(self)[0] * (stable_sigmoid(zz) - y);
  });
}

Var cross_entropy(Var logits, std::size_t target_class) {
  const Matrix& z = logits.value();
  if (z.cols() != 1) {
    throw DimensionError("cross_entropy expects a column of logits, got " + z.shape_string());
  }
  if (target_class >= z.rows()) {
    throw InputError("cross_entropy class " + std::to_string(target_class) + " out of range for " +
                     std::to_string(z.rows()) + " classes");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z.data()) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Matrix(1, 1, lse - z[target_class]), {logits},
      [il, target_class, lse](Tape& t, std::size_t self) {
        const double g = t.upstream(self)[0];
        const Matrix& zz = t.value(il);
        Matrix& gz = t.grad_buffer(il);
        for (std::size_t i = 0; i < zz.size(); ++i) {
          const double p = std::exp(zz[i] - lse);
          gz[i] += g * (p - (i == target_class ? 1.0 : 0.0));
        }
      });
}

Var l1_norm(Var v) {
  double s = 0.0;
  for (double x : v.value().data()) s += std::abs(x);
  const std::size_t iv = v.id();
  return v.tape()->record(Matrix(1, 1, s), {v}, [iv](Tape& t, std::size_t self) {
    const double g = t.upstream(self)[0];
    const Matrix& x = t.value(iv);
    Matrix& gx = t.grad_buffer(iv);
    for (std::size_t i = 0; i < x.size(); ++i)
      gx[i] += g * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
  });
}

}  // namespace milfd
