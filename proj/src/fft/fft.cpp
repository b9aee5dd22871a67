#include "vimf/fft.hpp"

#include <cmath>
#include <numbers>

#include "vimf/errors.hpp"
#include "vimf/ops.hpp"

namespace vimf {

namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

cplx twiddle(std::size_t k, std::size_t n, int sign) {
  const double theta = sign * 2.0 * std::numbers::pi * static_cast<double>(k % n) / static_cast<double>(n);
  return {std::cos(theta), std::sin(theta)};
}

void fft_radix2(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    std::vector<cplx> w(half);
    for (std::size_t k = 0; k < half; ++k) w[k] = twiddle(k, len, sign);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx even = a[i + k];
        const cplx odd = a[i + k + half] * w[k];
        a[i + k] = even + odd;
        a[i + k + half] = even - odd;
      }
    }
  }
}

void dft_direct(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  std::vector<cplx> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = twiddle(k, n, sign);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a[j] * w[(k * j) % n];
    out[k] = acc;
  }
  a = std::move(out);
}

// Row-major H x W complex grid, transformed in place along both axes.
void transform2d(std::vector<cplx>& grid, std::size_t h, std::size_t w, int sign) {
  std::vector<cplx> line(w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) line[c] = grid[r * w + c];
    fft1d(line, sign);
    for (std::size_t c = 0; c < w; ++c) grid[r * w + c] = line[c];
  }
  line.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) line[r] = grid[r * w + c];
    fft1d(line, sign);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = line[r];
  }
}

Tensor planes(std::size_t h, std::size_t w, const std::vector<cplx>& values) {
  Tensor parts({2, h, w});
  auto d = parts.mutable_data();
  for (std::size_t i = 0; i < h * w; ++i) {
    d[i] = values[i].real();
    d[h * w + i] = values[i].imag();
  }
  return parts;
}

}  // namespace

void fft1d(std::vector<cplx>& a, int sign) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size())) {
    fft_radix2(a, sign);
  } else {
    dft_direct(a, sign);
  }
}

ComplexGrid::ComplexGrid(Tensor parts) : parts_(std::move(parts)) {
  if (parts_.rank() != 3 || parts_.dim(0) != 2) {
    throw DimensionError("ComplexGrid expects [2,H,W] planes, got " + shape_str(parts_.shape()));
  }
}

ComplexGrid::ComplexGrid(std::size_t rows, std::size_t cols, const std::vector<cplx>& values)
    : parts_(planes(rows, cols, values)) {}

Tensor ComplexGrid::real() const {
  auto d = parts_.data();
  return Tensor({rows(), cols()}, std::vector<double>(d.begin(), d.begin() + static_cast<long>(rows() * cols())));
}

Tensor ComplexGrid::imag() const {
  auto d = parts_.data();
  return Tensor({rows(), cols()}, std::vector<double>(d.begin() + static_cast<long>(rows() * cols()), d.end()));
}

ComplexGrid dft2d_naive(const Tensor& f) {
  if (f.rank() != 2) throw DimensionError("dft2d_naive expects [H,W], got " + shape_str(f.shape()));
  const std::size_t h = f.dim(0), w = f.dim(1);
  std::vector<cplx> out(h * w);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      cplx acc = 0.0;
      for (std::size_t x = 0; x < h; ++x)
        for (std::size_t y = 0; y < w; ++y) {
          const double phase = static_cast<double>((u * x) % h) / static_cast<double>(h) +
                               static_cast<double>((v * y) % w) / static_cast<double>(w);
          const double theta = -2.0 * std::numbers::pi * phase;
          acc += f[x * w + y] * cplx(std::cos(theta), std::sin(theta));
        }
      out[u * w + v] = acc;
    }
  return ComplexGrid(h, w, out);
}

ComplexGrid fft2d(const Tensor& f) {
  if (f.rank() != 2) throw DimensionError("fft2d expects [H,W], got " + shape_str(f.shape()));
  const std::size_t h = f.dim(0), w = f.dim(1);
  std::vector<cplx> grid(h * w);
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = f[i];
  transform2d(grid, h, w, -1);
  Tensor parts = planes(h, w, grid);
  // d re(u,v)/d f(x,y) = cos(theta), d im/d f = -sin(theta) with theta the
  // forward phase, so grad f = Re(sum_uv (g_re + i g_im) e^{+i theta}): the
  // adjoint transform of the upstream gradient, real part.
  return ComplexGrid(record_op("fft2d", {f}, parts, [h, w](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    std::vector<cplx> up(h * w);
    for (std::size_t i = 0; i < h * w; ++i) up[i] = cplx(g[i], g[h * w + i]);
    transform2d(up, h, w, +1);
    for (std::size_t i = 0; i < h * w; ++i) (*gi[0])[i] += up[i].real();
  }));
}

Tensor amplitude_spectrum(const ComplexGrid& spectrum) {
  const Tensor& parts = spectrum.parts();
  const std::size_t h = spectrum.rows(), w = spectrum.cols(), n = h * w;
  Tensor out({h, w});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    const double re = parts[i], im = parts[n + i];
    o[i] = std::sqrt(re * re + im * im + kAmplitudeEps);
  }
  return record_op("amplitude_spectrum", {parts}, out, [parts, out, n](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    for (std::size_t i = 0; i < n; ++i) {
      (*gi[0])[i] += g[i] * parts[i] / out[i];
      (*gi[0])[n + i] += g[i] * parts[n + i] / out[i];
    }
  });
}

Tensor amp2d_per_channel(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("amp2d_per_channel expects [D,H,W], got " + shape_str(x.shape()));
  const std::size_t d = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<Tensor> channels;
  channels.reserve(d);
  for (std::size_t c = 0; c < d; ++c) {
    const Tensor plane = reshape(slice_rows(x, c, 1), {h, w});
    channels.push_back(amplitude_spectrum(fft2d(plane)));
  }
  return stack(channels);
}

Tensor amp2d_sequence_grid(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("amp2d_sequence_grid expects [L,D], got " + shape_str(x.shape()));
  return amplitude_spectrum(fft2d(x));
}

Tensor cyclic_shift(const Tensor& f, long a, long b) {
  if (f.rank() != 2) throw DimensionError("cyclic_shift expects [H,W]");
  const long h = static_cast<long>(f.dim(0)), w = static_cast<long>(f.dim(1));
  Tensor out(f.shape());
  auto o = out.mutable_data();
  for (long x = 0; x < h; ++x)
    for (long y = 0; y < w; ++y) {
      const long nx = ((x + a) % h + h) % h;
      const long ny = ((y + b) % w + w) % w;
      o[static_cast<std::size_t>(nx * w + ny)] = f[static_cast<std::size_t>(x * w + y)];
    }
  return out;
}

}  // namespace vimf
