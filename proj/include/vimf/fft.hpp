#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "vimf/tensor.hpp"

namespace vimf {

// H x W complex spectrum. Real and imaginary planes live in one [2,H,W]
// tensor so that gradients can flow through both.
class ComplexGrid {
 public:
  ComplexGrid() = default;
  explicit ComplexGrid(Tensor parts);
  ComplexGrid(std::size_t rows, std::size_t cols, const std::vector<std::complex<double>>& values);

  std::size_t rows() const { return parts_.dim(1); }
  std::size_t cols() const { return parts_.dim(2); }
  const Tensor& parts() const { return parts_; }

  double re(std::size_t u, std::size_t v) const { return parts_[u * cols() + v]; }
  double im(std::size_t u, std::size_t v) const { return parts_[rows() * cols() + u * cols() + v]; }
  std::complex<double> at(std::size_t u, std::size_t v) const { return {re(u, v), im(u, v)}; }

  // Copies of the planes, not connected to the tape.
  Tensor real() const;
  Tensor imag() const;

 private:
  Tensor parts_;
};

// Unnormalized forward transform evaluated directly from the definition,
// O(H^2 W^2). Reference for fft2d; not differentiable.
ComplexGrid dft2d_naive(const Tensor& f);

// Row-then-column transform. Radix-2 Cooley-Tukey on power-of-two axes, direct
// O(n^2) DFT on the others. Unnormalized, differentiable.
ComplexGrid fft2d(const Tensor& f);

// sqrt(re^2 + im^2 + 1e-12), differentiable through re and im.
Tensor amplitude_spectrum(const ComplexGrid& spectrum);

inline constexpr double kAmplitudeEps = 1e-12;

// [D,H,W] -> [D,H,W], one spatial transform per channel.
Tensor amp2d_per_channel(const Tensor& x);

// [L,D] -> [L,D], the whole token matrix as a single grid.
Tensor amp2d_sequence_grid(const Tensor& x);

// In-place 1D transform used by fft2d; sign = -1 forward, +1 for the adjoint.
void fft1d(std::vector<std::complex<double>>& a, int sign);

// Cyclic shift: out[(x+a) mod H, (y+b) mod W] = f[x, y].
Tensor cyclic_shift(const Tensor& f, long a, long b);

}  // namespace vimf
