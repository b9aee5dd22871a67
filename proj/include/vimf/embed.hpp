#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vimf/nn.hpp"
#include "vimf/ops.hpp"
#include "vimf/tensor.hpp"

namespace vimf {

struct ConvSpec {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_channels = 1;
};

// A stem block is a run of convs whose final output is a reported stage.
struct StemBlock {
  std::vector<ConvSpec> convs;
};

struct StemConfig {
  std::vector<StemBlock> blocks;
  std::size_t in_channels = 3;

  // 7x7/4 pad 3 -> c1; [2x2/2 -> c2, 1x1 -> c2]; [2x2/2 -> dim, 1x1 -> dim].
  static StemConfig overlapping(std::size_t c1, std::size_t c2, std::size_t dim);
  // The same layout scaled from the model width: (dim/4, dim/2, dim).
  static StemConfig for_dim(std::size_t dim);

  std::size_t out_channels() const;
  std::size_t total_stride() const;
  // Output extent after each block for a square input of the given size.
  std::vector<std::size_t> stage_extents(std::size_t resolution) const;
  // Adjacent outputs of the first conv read shared input pixels.
  bool first_stage_overlaps() const;
};

// Stem and stage-transition convs: weight ~ uniform(+-sqrt(6/fan_in)), bias 0.
struct Conv2dParams {
  Tensor weight;  // [Cout,Cin,K,K]
  Tensor bias;    // [Cout]
  ConvSpec spec;

  Tensor operator()(const Tensor& x) const;
  static Conv2dParams make(ParamFactory& f, const std::string& name, std::size_t in, const ConvSpec& spec);
};

struct ConvStem {
  StemConfig cfg;
  std::vector<Conv2dParams> convs;  // flattened over blocks
};

ConvStem make_conv_stem(ParamFactory& f, const std::string& name, const StemConfig& cfg);

// Every conv is followed by silu. Returns the final map [D,h,w].
Tensor conv_stem_map(const Tensor& img, const ConvStem& stem);
// Flattened row-major to tokens [h*w, D].
Tensor conv_stem(const Tensor& img, const ConvStem& stem);

// [C,H,W] -> [n, C*P*P], patches in row-major grid order, each flattened as (c, i, j).
Tensor extract_patches(const Tensor& img, std::size_t patch);

// Non-overlapping patch projection; w_proj is [(P*P*C), D].
Tensor patchify_baseline(const Tensor& img, std::size_t patch, const Tensor& w_proj, const Tensor& b = {});

// [cls; tokens] (+ pos). pos, when given, must be [(n+1), D].
Tensor attach_class_token(const Tensor& tokens, const Tensor& cls, const Tensor& pos = {});

// [D,h,w] feature map <-> [h*w, D] tokens.
Tensor flatten_map(const Tensor& map);
Tensor unflatten_tokens(const Tensor& tokens, std::size_t rows, std::size_t cols);

}  // namespace vimf
