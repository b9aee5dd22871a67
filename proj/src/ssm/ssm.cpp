#include "vimf/ssm.hpp"

#include <cmath>

#include "vimf/errors.hpp"
#include "vimf/ops.hpp"

namespace vimf {

namespace {

// phi(z) = (e^z - 1) / z and its derivative, with series near the removable singularity.
double zoh_phi(double z) {
  if (std::abs(z) < kZohSeriesThreshold) return 1.0 + 0.5 * z;
  return std::expm1(z) / z;
}

void zoh_phi_and_prime(double z, double& phi, double& dphi) {
  if (std::abs(z) < 1e-4) {
    phi = zoh_phi(z);
    dphi = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
    return;
  }
  const double em1 = std::expm1(z);
  phi = em1 / z;
  dphi = (z * (em1 + 1.0) - em1) / (z * z);
}

void check_discretize_shapes(const Tensor& a, const Tensor& b, const Tensor& delta) {
  if (a.rank() != 2 || b.rank() != 2 || delta.rank() != 2 || b.dim(0) != delta.dim(0) || a.dim(0) != delta.dim(1) ||
      a.dim(1) != b.dim(1)) {
    throw DimensionError("discretize: incompatible A " + shape_str(a.shape()) + ", B " + shape_str(b.shape()) +
                         ", delta " + shape_str(delta.shape()));
  }
  for (double v : delta.data()) {
    if (!(v > 0.0)) throw DomainError("discretize: delta must be strictly positive, got " + std::to_string(v));
  }
}

Tensor zoh_decay(const Tensor& a, const Tensor& delta) {
  const std::size_t len = delta.dim(0), d = a.dim(0), n = a.dim(1);
  Tensor out({len, d, n});
  auto o = out.mutable_data();
  for (std::size_t l = 0; l < len; ++l)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t s = 0; s < n; ++s) o[(l * d + c) * n + s] = std::exp(delta[l * d + c] * a[c * n + s]);
  return record_op("zoh_decay", {a, delta}, out,
                   [a, delta, out, len, d, n](std::span<const double> g, const GradSlots& gi) {
                     for (std::size_t l = 0; l < len; ++l)
                       for (std::size_t c = 0; c < d; ++c)
                         for (std::size_t s = 0; s < n; ++s) {
                           const std::size_t i = (l * d + c) * n + s;
                           const double ga = g[i] * out[i];
                           if (gi[0]) (*gi[0])[c * n + s] += ga * delta[l * d + c];
                           if (gi[1]) (*gi[1])[l * d + c] += ga * a[c * n + s];
                         }
                   });
}

Tensor zoh_input(const Tensor& a, const Tensor& b, const Tensor& delta, Discretization rule) {
  const std::size_t len = delta.dim(0), d = a.dim(0), n = a.dim(1);
  const bool exact = rule == Discretization::zoh;
  Tensor out({len, d, n});
  auto o = out.mutable_data();
  for (std::size_t l = 0; l < len; ++l)
    for (std::size_t c = 0; c < d; ++c) {
      const double dt = delta[l * d + c];
      for (std::size_t s = 0; s < n; ++s) {
        const double phi = exact ? zoh_phi(dt * a[c * n + s]) : 1.0;
        o[(l * d + c) * n + s] = phi * dt * b[l * n + s];
      }
    }
  return record_op("zoh_input", {a, b, delta}, out,
                   [a, b, delta, len, d, n, exact](std::span<const double> g, const GradSlots& gi) {
                     for (std::size_t l = 0; l < len; ++l)
                       for (std::size_t c = 0; c < d; ++c) {
                         const double dt = delta[l * d + c];
                         for (std::size_t s = 0; s < n; ++s) {
                           const double gv = g[(l * d + c) * n + s];
                           const double bv = b[l * n + s];
                           const double z = dt * a[c * n + s];
                           double phi = 1.0, dphi = 0.0;
                           if (exact) zoh_phi_and_prime(z, phi, dphi);
                           if (gi[0]) (*gi[0])[c * n + s] += gv * bv * dt * dt * dphi;
                           if (gi[1]) (*gi[1])[l * n + s] += gv * phi * dt;
                           if (gi[2]) (*gi[2])[l * d + c] += gv * bv * (phi + z * dphi);
                         }
                       }
                   });
}

}  // namespace

Discretized discretize(const Tensor& a, const Tensor& b, const Tensor& delta, Discretization rule) {
  check_discretize_shapes(a, b, delta);
  return {zoh_decay(a, delta), zoh_input(a, b, delta, rule)};
}

Selection selective_params(const Tensor& x, const S6Params& p) {
  const std::size_t r = p.dt_rank(), n = p.state();
  const Tensor proj = p.x_proj(x);
  if (proj.dim(1) != r + 2 * n) {
    throw DimensionError("selective_params: x_proj width " + std::to_string(proj.dim(1)) + " != dt_rank + 2N = " +
                         std::to_string(r + 2 * n));
  }
  Selection sel;
  const Tensor dt_in = slice_cols(proj, 0, r);
  sel.b = slice_cols(proj, r, n);
  sel.c = slice_cols(proj, r + n, n);
  sel.delta = softplus(p.dt_proj(dt_in));
  return sel;
}

Tensor scan_sequential(const Tensor& abar, const Tensor& bbar, const Tensor& c, const Tensor& x,
                       const Tensor& d_skip) {
  if (abar.rank() != 3 || abar.shape() != bbar.shape() || x.rank() != 2 || c.rank() != 2 || x.dim(0) != abar.dim(0) ||
      x.dim(1) != abar.dim(1) || c.dim(0) != abar.dim(0) || c.dim(1) != abar.dim(2)) {
    throw DimensionError("scan_sequential: incompatible Abar " + shape_str(abar.shape()) + ", Bbar " +
                         shape_str(bbar.shape()) + ", C " + shape_str(c.shape()) + ", x " + shape_str(x.shape()));
  }
  const std::size_t len = abar.dim(0), d = abar.dim(1), n = abar.dim(2);
  if (d_skip.defined() && d_skip.numel() != d) throw DimensionError("scan_sequential: d_skip extent mismatch");

  std::vector<double> states(len * d * n);  // h_t for every t, kept for backward
  Tensor out({len, d});
  auto y = out.mutable_data();
  std::vector<double> h(d * n, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t k = 0; k < d; ++k) {
      const double xv = x[t * d + k];
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t i = (t * d + k) * n + s;
        double& hv = h[k * n + s];
        hv = abar[i] * hv + bbar[i] * xv;
        acc += c[t * n + s] * hv;
      }
      y[t * d + k] = acc + (d_skip.defined() ? d_skip[k] * xv : 0.0);
    }
    std::copy(h.begin(), h.end(), states.begin() + static_cast<long>(t * d * n));
  }

  return record_op(
      "scan_sequential", {abar, bbar, c, x, d_skip}, out,
      [abar, bbar, c, x, d_skip, states = std::move(states), len, d, n](std::span<const double> g,
                                                                         const GradSlots& gi) {
        std::vector<double> gh(d * n, 0.0);  // adjoint of h_t
        for (std::size_t t = len; t-- > 0;) {
          for (std::size_t k = 0; k < d; ++k) {
            const double gy = g[t * d + k];
            const double xv = x[t * d + k];
            double gx = d_skip.defined() ? gy * d_skip[k] : 0.0;
            for (std::size_t s = 0; s < n; ++s) {
              const std::size_t i = (t * d + k) * n + s;
              const double hv = states[i];
              double& adj = gh[k * n + s];
              adj += gy * c[t * n + s];
              if (gi[2]) (*gi[2])[t * n + s] += gy * hv;
              const double hprev = t ? states[i - d * n] : 0.0;
              if (gi[0]) (*gi[0])[i] += adj * hprev;
              if (gi[1]) (*gi[1])[i] += adj * xv;
              gx += adj * bbar[i];
              adj *= abar[i];  // carry to h_{t-1}
            }
            if (gi[3]) (*gi[3])[t * d + k] += gx;
            if (gi[4]) (*gi[4])[k] += gy * xv;
          }
        }
      });
}

Tensor scan_kernel(const Tensor& abar, const Tensor& bbar, const Tensor& c) {
  if (abar.rank() != 3 || abar.shape() != bbar.shape() || c.rank() != 2 || c.dim(0) != abar.dim(0) ||
      c.dim(1) != abar.dim(2)) {
    throw DimensionError("scan_kernel: incompatible shapes");
  }
  const std::size_t len = abar.dim(0), d = abar.dim(1), n = abar.dim(2);
  for (std::size_t t = 1; t < len; ++t) {
    for (std::size_t i = 0; i < d * n; ++i) {
      if (abar[t * d * n + i] != abar[i] || bbar[t * d * n + i] != bbar[i]) {
        throw ContractError("scan_kernel: Abar/Bbar vary over time; the convolution form needs an LTI system");
      }
    }
    for (std::size_t s = 0; s < n; ++s) {
      if (c[t * n + s] != c[s]) throw ContractError("scan_kernel: C varies over time; the convolution form needs an LTI system");
    }
  }
  Tensor kernel({len, d});
  auto kd = kernel.mutable_data();
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t s = 0; s < n; ++s) {
      double power = 1.0;  // Abar^j
      for (std::size_t j = 0; j < len; ++j) {
        kd[j * d + k] += c[s] * power * bbar[k * n + s];
        power *= abar[k * n + s];
      }
    }
  return kernel;
}

Tensor apply_scan_kernel(const Tensor& kernel, const Tensor& x, const Tensor& d_skip) {
  if (kernel.shape() != x.shape()) throw DimensionError("apply_scan_kernel: kernel and input shapes differ");
  const std::size_t len = x.dim(0), d = x.dim(1);
  Tensor out({len, d});
  auto y = out.mutable_data();
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= t; ++j) acc += kernel[j * d + k] * x[(t - j) * d + k];
      y[t * d + k] = acc + (d_skip.defined() ? d_skip[k] * x[t * d + k] : 0.0);
    }
  return out;
}

Tensor state_matrix(const S6Params& p) { return scale(exp(p.a_log), -1.0); }

Tensor s6(const Tensor& u, const S6Params& p, const SsmOptions& opts) {
  const Selection sel = selective_params(u, p);
  const Discretized disc = discretize(state_matrix(p), sel.b, sel.delta, opts.rule);
  return scan_sequential(disc.abar, disc.bbar, sel.c, u, p.d_skip);
}

Tensor scan_branch(const Tensor& x, const ScanBranch& branch, const SsmOptions& opts) {
  const Tensor pre = branch.conv ? conv1d_depthwise_causal(x, branch.conv->weight, branch.conv->bias) : x;
  return s6(silu(pre), branch.s6, opts);
}

Tensor bidir_ssm_branch(const Tensor& x, const Tensor& z, const ScanBranch& fwd, const ScanBranch& bwd,
                        const Linear& out_proj, const SsmOptions& opts) {
  if (x.shape() != z.shape()) {
    throw DimensionError("bidir_ssm_branch: x " + shape_str(x.shape()) + " and gate " + shape_str(z.shape()) +
                         " differ");
  }
  const Tensor y_fwd = scan_branch(x, fwd, opts);
  const Tensor y_bwd = flip_rows(scan_branch(flip_rows(x), bwd, opts));
  return out_proj(mul(add(y_fwd, y_bwd), silu(z)));
}

ScanBranch make_scan_branch(ParamFactory& f, const std::string& name, const S6Shape& shape) {
  const std::size_t di = shape.inner, n = shape.state, r = shape.dt_rank;
  ScanBranch branch;
  if (shape.conv_width > 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.conv_width));
    branch.conv = CausalConv{f.uniform(name + ".conv.weight", {di, shape.conv_width}, bound),
                             f.uniform(name + ".conv.bias", {di}, bound)};
  }
  S6Params& p = branch.s6;
  p.a_log = f.custom(name + ".a_log", {di, n},
                     [n](std::size_t i, Rng&) { return std::log(static_cast<double>(i % n + 1)); });
  p.x_proj = Linear::make(f, name + ".x_proj", di, r + 2 * n, false);
  p.dt_proj.weight = f.uniform(name + ".dt_proj.weight", {r, di}, 1.0 / std::sqrt(static_cast<double>(r)));
  p.dt_proj.bias = f.custom(name + ".dt_proj.bias", {di}, [](std::size_t, Rng& rng) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    return dt + std::log(-std::expm1(-dt));  // inverse softplus
  });
  if (shape.d_skip) p.d_skip = f.constant(name + ".d_skip", {di}, 1.0);
  return branch;
}

}  // namespace vimf
