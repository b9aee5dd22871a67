#include "vimf/synth.hpp"

#include <cmath>
#include <numbers>

#include "vimf/errors.hpp"
#include "vimf/rng.hpp"

namespace vimf {

namespace {

// Distinct orientations with |u|, |v| <= 2, so each tone survives a 16x downsampling of a 64 px image.
constexpr std::pair<int, int> kTones[kMaxToneClasses] = {{1, 0}, {0, 1}, {1, 1},  {1, -1}, {2, 0},  {0, 2},
                                                         {2, 1}, {1, 2}, {2, -1}, {1, -2}, {2, 2}, {2, -2}};

constexpr std::size_t kTemplateCells = 4;

void check(const SynthTaskSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("a synthetic task needs at least 2 classes");
  if (spec.resolution == 0 || spec.channels == 0) throw ConfigError("resolution and channels must be positive");
  if (spec.kind == TaskKind::frequency_tone && spec.num_classes > kMaxToneClasses) {
    throw ConfigError("the tone task supports at most " + std::to_string(kMaxToneClasses) + " classes");
  }
  if (spec.kind == TaskKind::shifted_pattern && spec.resolution % kTemplateCells) {
    throw ConfigError("shifted-pattern resolution must be a multiple of 4");
  }
}

// Coarse 4x4 random sign pattern per class, upsampled to the image size.
double template_value(const SynthTaskSpec& spec, std::size_t c, std::size_t x, std::size_t y) {
  const std::size_t cell = spec.resolution / kTemplateCells;
  Rng rng = Rng::derive(Rng::derive_seed(spec.seed, "template"), c);
  double v = 0.0;
  const std::size_t target = (x / cell) * kTemplateCells + y / cell;
  for (std::size_t k = 0; k <= target; ++k) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return v;
}

}  // namespace

std::pair<int, int> class_frequency(std::size_t c) {
  if (c >= kMaxToneClasses) throw ConfigError("no tone defined for class " + std::to_string(c));
  return kTones[c];
}

Tensor clean_sample(const SynthTaskSpec& spec, std::size_t c, std::size_t a, std::size_t b) {
  check(spec);
  const std::size_t n = spec.resolution;
  std::vector<double> v(n * n);
  if (spec.kind == TaskKind::frequency_tone) {
    const auto [fu, fv] = class_frequency(c);
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t y = 0; y < n; ++y) {
        // shift(f, a, b)[x, y] = f[x - a, y - b]
        const double px = static_cast<double>((x + n - a % n) % n), py = static_cast<double>((y + n - b % n) % n);
        v[x * n + y] = std::cos(2.0 * std::numbers::pi * (fu * px + fv * py) / static_cast<double>(n));
      }
    }
  } else {
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t y = 0; y < n; ++y) {
        v[x * n + y] = template_value(spec, c, (x + n - a % n) % n, (y + n - b % n) % n);
      }
    }
  }
  return Tensor({n, n}, std::move(v));
}

Dataset synth_dataset(const SynthTaskSpec& spec, Split split) {
  check(spec);
  const std::size_t count = split == Split::train ? spec.train_samples : spec.test_samples;
  if (count == 0) throw ConfigError("empty split requested");
  const std::size_t n = spec.resolution, ch = spec.channels, plane = n * n;
  const std::uint64_t split_seed = Rng::derive_seed(spec.seed, split == Split::train ? "train" : "test");

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.labels.resize(count);
  std::vector<double> data(count * ch * plane);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::derive(split_seed, static_cast<std::uint64_t>(i));
    // Balanced labels; the stream still decides shift and noise.
    const std::size_t label = i % spec.num_classes;
    const std::size_t a = rng.below(n), b = rng.below(n);
    const Tensor clean = clean_sample(spec, label, a, b);
    ds.labels[i] = label;
    double* dst = data.data() + i * ch * plane;
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t p = 0; p < plane; ++p) dst[c * plane + p] = clean[p] + spec.noise * rng.normal();
    }
  }
  ds.images = Tensor({count, ch, n, n}, std::move(data));
  return ds;
}

Tensor Dataset::gather(const std::vector<std::size_t>& indices) const {
  const Shape& s = images.shape();
  const std::size_t per = s[1] * s[2] * s[3];
  std::vector<double> out(indices.size() * per);
  const auto src = images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw ShapeError("sample index " + std::to_string(indices[k]) + " out of range");
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(indices[k] * per),
              src.begin() + static_cast<std::ptrdiff_t>((indices[k] + 1) * per), out.begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return Tensor({indices.size(), s[1], s[2], s[3]}, std::move(out));
}

}  // namespace vimf
