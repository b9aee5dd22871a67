#include "vimf/embed.hpp"

#include <cmath>

#include "vimf/errors.hpp"

namespace vimf {

StemConfig StemConfig::overlapping(std::size_t c1, std::size_t c2, std::size_t dim) {
  StemConfig cfg;
  cfg.blocks = {
      StemBlock{{ConvSpec{7, 4, 3, c1}}},
      StemBlock{{ConvSpec{2, 2, 0, c2}, ConvSpec{1, 1, 0, c2}}},
      StemBlock{{ConvSpec{2, 2, 0, dim}, ConvSpec{1, 1, 0, dim}}},
  };
  return cfg;
}

StemConfig StemConfig::for_dim(std::size_t dim) {
  return overlapping(std::max<std::size_t>(1, dim / 4), std::max<std::size_t>(1, dim / 2), dim);
}

std::size_t StemConfig::out_channels() const { return blocks.back().convs.back().out_channels; }

std::size_t StemConfig::total_stride() const {
  std::size_t s = 1;
  for (const auto& b : blocks)
    for (const auto& c : b.convs) s *= c.stride;
  return s;
}

std::vector<std::size_t> StemConfig::stage_extents(std::size_t resolution) const {
  std::vector<std::size_t> out;
  std::size_t e = resolution;
  for (const auto& b : blocks) {
    for (const auto& c : b.convs) {
      if (e + 2 * c.padding < c.kernel) {
        throw ShapeError("resolution " + std::to_string(resolution) + " is too small for the stem stride chain");
      }
      e = (e + 2 * c.padding - c.kernel) / c.stride + 1;
    }
    out.push_back(e);
  }
  return out;
}

bool StemConfig::first_stage_overlaps() const {
  const ConvSpec& c = blocks.front().convs.front();
  return c.kernel > c.stride;
}

Tensor Conv2dParams::operator()(const Tensor& x) const {
  return conv2d(x, weight, {spec.stride, spec.stride}, {spec.padding, spec.padding}, bias);
}

Conv2dParams Conv2dParams::make(ParamFactory& f, const std::string& name, std::size_t in, const ConvSpec& spec) {
  // The stem has no norm layers; 1/sqrt(fan_in) would shrink the signal ~3.5x per conv.
  const double bound = std::sqrt(6.0 / static_cast<double>(in * spec.kernel * spec.kernel));
  Conv2dParams p;
  p.spec = spec;
  p.weight = f.uniform(name + ".weight", {spec.out_channels, in, spec.kernel, spec.kernel}, bound);
  p.bias = f.constant(name + ".bias", {spec.out_channels}, 0.0);
  return p;
}

ConvStem make_conv_stem(ParamFactory& f, const std::string& name, const StemConfig& cfg) {
  ConvStem stem{cfg, {}};
  std::size_t in = cfg.in_channels;
  std::size_t idx = 0;
  for (const auto& b : cfg.blocks)
    for (const auto& c : b.convs) {
      stem.convs.push_back(Conv2dParams::make(f, name + ".conv" + std::to_string(idx++), in, c));
      in = c.out_channels;
    }
  return stem;
}

Tensor conv_stem_map(const Tensor& img, const ConvStem& stem) {
  if (img.rank() != 3 || img.dim(0) != stem.cfg.in_channels) {
    throw DimensionError("conv_stem: expected [" + std::to_string(stem.cfg.in_channels) + ",H,W] image, got " +
                         shape_str(img.shape()));
  }
  if (img.dim(1) != img.dim(2)) throw ShapeError("conv_stem: square images only");
  (void)stem.cfg.stage_extents(img.dim(1));
  Tensor x = img;
  for (const auto& conv : stem.convs) x = silu(conv(x));
  return x;
}

Tensor conv_stem(const Tensor& img, const ConvStem& stem) { return flatten_map(conv_stem_map(img, stem)); }

Tensor flatten_map(const Tensor& map) {
  if (map.rank() != 3) throw DimensionError("flatten_map expects [D,h,w], got " + shape_str(map.shape()));
  return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

Tensor unflatten_tokens(const Tensor& tokens, std::size_t rows, std::size_t cols) {
  if (tokens.rank() != 2 || tokens.dim(0) != rows * cols) {
    throw ShapeError("unflatten_tokens: " + shape_str(tokens.shape()) + " does not fill " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  return reshape(transpose(tokens), {tokens.dim(1), rows, cols});
}

Tensor extract_patches(const Tensor& img, std::size_t patch) {
  if (img.rank() != 3) throw DimensionError("extract_patches expects [C,H,W], got " + shape_str(img.shape()));
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (patch == 0 || h % patch || w % patch) {
    throw ShapeError("patch size " + std::to_string(patch) + " does not divide " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const std::size_t gh = h / patch, gw = w / patch, width = c * patch * patch;
  Tensor out({gh * gw, width});
  auto o = out.mutable_data();
  // Index map from output position to image position; shared with backward.
  std::vector<std::size_t> src(gh * gw * width);
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < patch; ++i)
          for (std::size_t j = 0; j < patch; ++j) {
            const std::size_t oi = (py * gw + px) * width + (ch * patch + i) * patch + j;
            src[oi] = (ch * h + py * patch + i) * w + px * patch + j;
            o[oi] = img[src[oi]];
          }
  return record_op("extract_patches", {img}, out, [src = std::move(src)](std::span<const double> g, const GradSlots& gi) {
    if (!gi[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[src[i]] += g[i];
  });
}

Tensor patchify_baseline(const Tensor& img, std::size_t patch, const Tensor& w_proj, const Tensor& b) {
  return linear(extract_patches(img, patch), w_proj, b);
}

Tensor attach_class_token(const Tensor& tokens, const Tensor& cls, const Tensor& pos) {
  if (tokens.rank() != 2 || cls.numel() != tokens.dim(1)) {
    throw DimensionError("attach_class_token: class token " + shape_str(cls.shape()) + " vs tokens " +
                         shape_str(tokens.shape()));
  }
  const Tensor seq = concat_rows({reshape(cls, {1, tokens.dim(1)}), tokens});
  if (!pos.defined()) return seq;
  if (pos.shape() != seq.shape()) {
    throw DimensionError("attach_class_token: position embedding " + shape_str(pos.shape()) + " must be " +
                         shape_str(seq.shape()));
  }
  return add(seq, pos);
}

}  // namespace vimf
