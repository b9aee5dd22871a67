#include "vimf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vimf/errors.hpp"

namespace vimf {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
  return record_op(name, {x}, out, [x, deriv](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    auto in = x.data();
    auto& gx = *gi[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i]);
  });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  if (x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: inner extents differ, x " + shape_str(x.shape()) + " vs W " + shape_str(w.shape()));
  }
  const std::size_t rows = x.dim(0), din = w.dim(0), dout = w.dim(1);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != dout)) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not match W " + shape_str(w.shape()));
  }
  Tensor out({rows, dout});
  auto o = out.mutable_data();
  auto xd = x.data();
  auto wd = w.data();
  for (std::size_t l = 0; l < rows; ++l) {
    double* orow = &o[l * dout];
    for (std::size_t i = 0; i < din; ++i) {
      const double xv = xd[l * din + i];
      const double* wrow = &wd[i * dout];
      for (std::size_t j = 0; j < dout; ++j) orow[j] += xv * wrow[j];
    }
    if (b.defined()) {
      auto bd = b.data();
      for (std::size_t j = 0; j < dout; ++j) orow[j] += bd[j];
    }
  }
  return record_op("linear", {x, w, b}, out, [x, w, rows, din, dout](std::span<const double> g, const GradSlots& gi) {
    auto xd = x.data();
    auto wd = w.data();
    if (gi[0]) {
      auto& gx = *gi[0];
      for (std::size_t l = 0; l < rows; ++l) {
        for (std::size_t i = 0; i < din; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < dout; ++j) acc += g[l * dout + j] * wd[i * dout + j];
          gx[l * din + i] += acc;
        }
      }
    }
    if (gi[1]) {
      auto& gw = *gi[1];
      for (std::size_t l = 0; l < rows; ++l) {
        for (std::size_t i = 0; i < din; ++i) {
          const double xv = xd[l * din + i];
          for (std::size_t j = 0; j < dout; ++j) gw[i * dout + j] += xv * g[l * dout + j];
        }
      }
    }
    if (gi.size() > 2 && gi[2]) {
      auto& gb = *gi[2];
      for (std::size_t l = 0; l < rows; ++l)
        for (std::size_t j = 0; j < dout; ++j) gb[j] += g[l * dout + j];
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& k, Pair stride, Pair padding, const Tensor& b) {
  require_rank(x, 3, "conv2d");
  require_rank(k, 4, "conv2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != c) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " does not match input " + shape_str(x.shape()));
  }
  if (stride.rows == 0 || stride.cols == 0) throw DimensionError("conv2d: stride must be positive");
  if (h + 2 * padding.rows < kh || w + 2 * padding.cols < kw) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != co)) throw DimensionError("conv2d: bias extent mismatch");
  const std::size_t oh = (h + 2 * padding.rows - kh) / stride.rows + 1;
  const std::size_t ow = (w + 2 * padding.cols - kw) / stride.cols + 1;
  const long ph = static_cast<long>(padding.rows), pw = static_cast<long>(padding.cols);
  const std::size_t sh = stride.rows, sw = stride.cols;

  // First output index whose tap lands at or after input index 0, and one past the last inside the input.
  auto valid_range = [](std::size_t out_len, std::size_t in_len, std::size_t stride_, long pad, std::size_t tap) {
    const long off = static_cast<long>(tap) - pad;
    const long lo = off >= 0 ? 0 : (-off + static_cast<long>(stride_) - 1) / static_cast<long>(stride_);
    const long last = static_cast<long>(in_len) - 1 - off;
    const long hi = last < 0 ? 0 : std::min<long>(static_cast<long>(out_len), last / static_cast<long>(stride_) + 1);
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(hi, lo)));
  };

  // Visits every (output, input, kernel) triple that lies inside the unpadded input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < kh; ++i) {
          const auto [y0, y1] = valid_range(oh, h, sh, ph, i);
          for (std::size_t j = 0; j < kw; ++j) {
            const auto [x0, x1] = valid_range(ow, w, sw, pw, j);
            const std::size_t kidx = ((o * c + ci) * kh + i) * kw + j;
            for (std::size_t y = y0; y < y1; ++y) {
              const std::size_t row = (ci * h + y * sh + i - static_cast<std::size_t>(ph)) * w;
              const std::size_t obase = (o * oh + y) * ow;
              for (std::size_t xo = x0; xo < x1; ++xo) fn(obase + xo, row + xo * sw + j - static_cast<std::size_t>(pw), kidx);
            }
          }
        }
  };

  Tensor out({co, oh, ow});
  auto od = out.mutable_data();
  auto xd = x.data();
  auto kd = k.data();
  for_each_tap([&](std::size_t oi, std::size_t xi, std::size_t ki) { od[oi] += xd[xi] * kd[ki]; });
  if (b.defined()) {
    auto bd = b.data();
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t p = 0; p < oh * ow; ++p) od[o * oh * ow + p] += bd[o];
  }
  return record_op("conv2d", {x, k, b}, out,
                   [x, k, co, oh, ow, for_each_tap](std::span<const double> g, const GradSlots& gi) {
                     auto xd = x.data();
                     auto kd = k.data();
                     std::vector<double>* gx = gi[0];
                     std::vector<double>* gk = gi[1];
                     if (gx) for_each_tap([&](std::size_t oi, std::size_t xi, std::size_t ki) { (*gx)[xi] += g[oi] * kd[ki]; });
                     if (gk) for_each_tap([&](std::size_t oi, std::size_t xi, std::size_t ki) { (*gk)[ki] += g[oi] * xd[xi]; });
                     if (gi.size() > 2 && gi[2]) {
                       auto& gb = *gi[2];
                       for (std::size_t o = 0; o < co; ++o)
                         for (std::size_t p = 0; p < oh * ow; ++p) gb[o] += g[o * oh * ow + p];
                     }
                   });
}

Tensor conv1d_depthwise_causal(const Tensor& x, const Tensor& k, const Tensor& b) {
  require_rank(x, 2, "conv1d_depthwise_causal");
  require_rank(k, 2, "conv1d_depthwise_causal");
  const std::size_t len = x.dim(0), d = x.dim(1), kw = k.dim(1);
  if (k.dim(0) != d) {
    throw DimensionError("conv1d_depthwise_causal: kernel " + shape_str(k.shape()) + " vs input " + shape_str(x.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != d)) throw DimensionError("conv1d_depthwise_causal: bias mismatch");
  Tensor out({len, d});
  auto od = out.mutable_data();
  auto xd = x.data();
  auto kd = k.data();
  for (std::size_t l = 0; l < len; ++l)
    for (std::size_t j = 0; j < kw && j <= l; ++j)
      for (std::size_t c = 0; c < d; ++c) od[l * d + c] += xd[(l - j) * d + c] * kd[c * kw + j];
  if (b.defined()) {
    auto bd = b.data();
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t c = 0; c < d; ++c) od[l * d + c] += bd[c];
  }
  return record_op("conv1d_depthwise_causal", {x, k, b}, out,
                   [x, k, len, d, kw](std::span<const double> g, const GradSlots& gi) {
                     auto xd = x.data();
                     auto kd = k.data();
                     for (std::size_t l = 0; l < len; ++l)
                       for (std::size_t j = 0; j < kw && j <= l; ++j)
                         for (std::size_t c = 0; c < d; ++c) {
                           const double gv = g[l * d + c];
                           if (gi[0]) (*gi[0])[(l - j) * d + c] += gv * kd[c * kw + j];
                           if (gi[1]) (*gi[1])[c * kw + j] += gv * xd[(l - j) * d + c];
                         }
                     if (gi.size() > 2 && gi[2]) {
                       for (std::size_t l = 0; l < len; ++l)
                         for (std::size_t c = 0; c < d; ++c) (*gi[2])[c] += g[l * d + c];
                     }
                   });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v) { return stable_sigmoid(v); });
}

Tensor silu(const Tensor& x) {
  return unary(
      "silu", x, [](double v) { return v * stable_sigmoid(v); },
      [](double v) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](double v) { return stable_sigmoid(v); },
      [](double v) {
        const double s = stable_sigmoid(v);
        return s * (1.0 - s);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor elu_plus_one(const Tensor& x) {
  return unary(
      "elu_plus_one", x, [](double v) { return v > 0 ? v + 1.0 : std::exp(v); },
      [](double v) { return v > 0 ? 1.0 : std::exp(v); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: affine extents " + shape_str(gamma.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  auto od = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = &xd[r * d];
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * inv;
      xhat[r * d + i] = h;
      od[r * d + i] = gd[i] * h + bd[i];
    }
  }
  return record_op("layer_norm", {x, gamma, beta}, out,
                   [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](
                       std::span<const double> g, const GradSlots& gi) {
                     auto gd = gamma.data();
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (gi[0]) {
                         double m1 = 0.0, m2 = 0.0;
                         for (std::size_t i = 0; i < d; ++i) {
                           const double gh = g[r * d + i] * gd[i];
                           m1 += gh;
                           m2 += gh * xhat[r * d + i];
                         }
                         m1 /= static_cast<double>(d);
                         m2 /= static_cast<double>(d);
                         for (std::size_t i = 0; i < d; ++i) {
                           const double gh = g[r * d + i] * gd[i];
                           (*gi[0])[r * d + i] += inv_std[r] * (gh - m1 - xhat[r * d + i] * m2);
                         }
                       }
                       for (std::size_t i = 0; i < d; ++i) {
                         if (gi[1]) (*gi[1])[i] += g[r * d + i] * xhat[r * d + i];
                         if (gi[2]) (*gi[2])[i] += g[r * d + i];
                       }
                     }
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  return record_op("add", {a, b}, out, [](std::span<const double> g, const GradSlots& gi) {
    for (std::size_t k = 0; k < 2; ++k)
      if (gi[k])
        for (std::size_t i = 0; i < g.size(); ++i) (*gi[k])[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  return record_op("sub", {a, b}, out, [](std::span<const double> g, const GradSlots& gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
    if (gi[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  return record_op("mul", {a, b}, out, [a, b](std::span<const double> g, const GradSlots& gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * b[i];
    if (gi[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * a[i];
  });
}

Tensor scale(const Tensor& x, double c) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * x[i];
  return record_op("scale", {x}, out, [c](std::span<const double> g, const GradSlots& gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += c * g[i];
  });
}

Tensor scale_by(const Tensor& s, const Tensor& x) {
  if (s.numel() != 1) throw DimensionError("scale_by: scale must have one element, got " + shape_str(s.shape()));
  const double c = s[0];
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * x[i];
  return record_op("scale_by", {s, x}, out, [s, x](std::span<const double> g, const GradSlots& gi) {
    if (gi[0]) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
      (*gi[0])[0] += acc;
    }
    if (gi[1]) {
      const double c = s[0];
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += c * g[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  // Neumaier compensated summation.
  double acc = 0.0, comp = 0.0;
  for (double v : x.data()) {
    const double t = acc + v;
    comp += std::abs(acc) >= std::abs(v) ? (acc - t) + v : (v - t) + acc;
    acc = t;
  }
  return record_op("sum", {x}, Tensor::scalar(acc + comp), [](std::span<const double> g, const GradSlots& gi) {
    if (gi[0])
      for (double& v : *gi[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  Tensor out({1, d});
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) o[j] += x[r * d + j];
  for (double& v : o) v /= static_cast<double>(rows);
  return record_op("mean_rows", {x}, out, [rows, d](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) (*gi[0])[r * d + j] += g[j] * inv;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return record_op("reshape", {x}, out, [](std::span<const double> g, const GradSlots& gi) {
    if (gi[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out({c, r});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) o[j * r + i] = x[i * c + j];
  return record_op("transpose", {x}, out, [r, c](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gi[0])[i * c + j] += g[j * r + i];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  if (x.rank() == 0 || count == 0 || start + count > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = count;
  auto xd = x.data();
  Tensor out(s, std::vector<double>(xd.begin() + static_cast<long>(start * inner),
                                    xd.begin() + static_cast<long>((start + count) * inner)));
  return record_op("slice_rows", {x}, out, [start, inner](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[start * inner + i] += g[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) throw DimensionError("concat_rows: trailing extents differ: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  Shape s = parts[0].shape();
  s[0] = rows;
  std::vector<double> data;
  data.reserve(numel_of(s));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(data.size());
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return record_op("concat_rows", parts, Tensor(s, std::move(data)),
                   [offsets](std::span<const double> g, const GradSlots& gi) {
                     for (std::size_t k = 0; k < gi.size(); ++k) {
                       if (!gi[k]) continue;
                       auto& buf = *gi[k];
                       for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[offsets[k] + i];
                     }
                   });
}

Tensor flip_rows(const Tensor& x) {
  const std::size_t rows = x.dim(0);
  const std::size_t inner = x.numel() / rows;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < inner; ++i) o[r * inner + i] = x[(rows - 1 - r) * inner + i];
  return record_op("flip_rows", {x}, out, [rows, inner](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < inner; ++i) (*gi[0])[(rows - 1 - r) * inner + i] += g[r * inner + i];
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    lifted.push_back(reshape(p, s));
  }
  return concat_rows(lifted);
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (count == 0 || start + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of range for " +
                         shape_str(x.shape()));
  }
  Tensor out({rows, count});
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) o[r * count + j] = x[r * cols + start + j];
  return record_op("slice_cols", {x}, out, [rows, cols, start, count](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j) (*gi[0])[r * cols + start + j] += g[r * count + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw DimensionError("concat_cols: row counts differ");
    offsets.push_back(cols);
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  Tensor out({rows, cols});
  auto o = out.mutable_data();
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) o[r * cols + offsets[k] + j] = parts[k][r * widths[k] + j];
  return record_op("concat_cols", parts, out,
                   [rows, cols, offsets, widths](std::span<const double> g, const GradSlots& gi) {
                     for (std::size_t k = 0; k < gi.size(); ++k) {
                       if (!gi[k]) continue;
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < widths[k]; ++j)
                           (*gi[k])[r * widths[k] + j] += g[r * cols + offsets[k] + j];
                     }
                   });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != batch) throw DimensionError("cross_entropy: label count does not match batch");
  std::vector<double> probs(batch * k);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= k) throw DomainError("cross_entropy: label out of range");
    const double* row = &logits.data()[b * k];
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] = std::exp(row[j] - lse);
    loss += lse - row[labels[b]];
  }
  loss /= static_cast<double>(batch);
  return record_op("cross_entropy", {logits}, Tensor::scalar(loss),
                   [probs = std::move(probs), labels, batch, k](std::span<const double> g, const GradSlots& gi) {
                     if (!gi[0]) return;
                     const double s = g[0] / static_cast<double>(batch);
                     for (std::size_t b = 0; b < batch; ++b)
                       for (std::size_t j = 0; j < k; ++j) {
                         const double target = j == labels[b] ? 1.0 : 0.0;
                         (*gi[0])[b * k + j] += s * (probs[b * k + j] - target);
                       }
                   });
}

}  // namespace vimf
