#include "vimf/config.hpp"

#include <cmath>
#include <fstream>

#include "vimf/errors.hpp"

namespace vimf {

using nlohmann::json;

BlockVariant parse_variant(const std::string& s) {
  if (s == "vim") return BlockVariant::vim;
  if (s == "vim-f" || s == "vim_f") return BlockVariant::vim_f;
  if (s == "vim-f-h" || s == "vim_f_h") return BlockVariant::vim_f_h;
  if (s == "vim-f-cf" || s == "vim_f_cf") return BlockVariant::vim_f_cf;
  throw ConfigError("unknown variant '" + s + "' (expected vim, vim-f, vim-f-h, vim-f-cf)");
}

FftMode parse_fft_mode(const std::string& s) {
  if (s == "per-channel" || s == "per_channel") return FftMode::per_channel;
  if (s == "sequence-grid" || s == "sequence_grid") return FftMode::sequence_grid;
  throw ConfigError("unknown fft mode '" + s + "' (expected per-channel, sequence-grid)");
}

ModelConfig ModelConfig::desk(BlockVariant variant) {
  ModelConfig c;
  c.variant = variant;
  if (variant == BlockVariant::vim) {
    c.stem = StemKind::patch;
    c.use_pos_embed = true;
    c.f_block_proportion = 0.0;
  }
  if (variant == BlockVariant::vim_f_cf) c.use_class_token = false;
  return c;
}

ModelConfig ModelConfig::tiny_fidelity(BlockVariant variant) {
  ModelConfig c = desk(variant);
  c.depth = 24;
  c.dim = 192;
  c.state = 16;
  c.resolution = 224;
  c.num_classes = 1000;
  c.heads = 24;
  return c;
}

std::size_t ModelConfig::f_block_count() const {
  if (variant == BlockVariant::vim) return 0;
  if (is_staged()) {
    std::size_t n = 0;
    for (auto d : stage_depths) n += d;
    return n;
  }
  return static_cast<std::size_t>(std::ceil(static_cast<double>(depth) * f_block_proportion - 1e-9));
}

StemConfig ModelConfig::stem_config() const {
  StemConfig s = stem_channels.size() == 2 ? StemConfig::overlapping(stem_channels[0], stem_channels[1], dim)
                                           : StemConfig::for_dim(dim);
  s.in_channels = in_channels;
  return s;
}

std::size_t ModelConfig::token_grid_extent() const {
  if (stem == StemKind::patch) return resolution / patch_size;
  return stem_config().stage_extents(resolution).back();
}

BlockConfig ModelConfig::block_config(BlockVariant block_variant, std::size_t block_dim, Grid grid,
                                      bool class_token) const {
  BlockConfig b;
  b.variant = block_variant;
  b.dim = block_dim;
  b.state = state;
  b.expand = expand;
  b.conv_width = conv_width;
  b.dt_rank = dt_rank;
  b.fft_mode = fft_mode;
  b.heads = heads;
  b.has_class_token = class_token;
  b.grid = grid;
  b.d_skip = d_skip;
  b.rule = rule;
  b.alpha_init = alpha_init;
  b.beta_init = beta_init;
  return b;
}

void ModelConfig::validate() const {
  if (!(f_block_proportion >= 0.0 && f_block_proportion <= 1.0)) {
    throw ConfigError("f_block_proportion must lie in [0, 1]");
  }
  if (dim == 0 || state == 0 || expand == 0 || num_classes == 0 || in_channels == 0) {
    throw ConfigError("dim, state, expand, num_classes and in_channels must be positive");
  }
  if (stem_channels.size() != 0 && stem_channels.size() != 2) throw ConfigError("stem_channels takes two entries");
  if (is_staged()) {
    if (stage_depths.size() != 4 || stage_dims.size() != 4) {
      throw ConfigError("the conv-free variant uses exactly 4 stages");
    }
    if (use_class_token) throw ConfigError("the conv-free variant has no class token");
    std::size_t e = resolution;
    if (e < 16) throw ConfigError("resolution too small for the stage hierarchy");
    e = (e + 6 - 7) / 4 + 1;
    if (e < 8) throw ConfigError("resolution too small for the stage hierarchy");
  } else {
    if (stem == StemKind::patch) {
      if (patch_size == 0 || resolution % patch_size) {
        throw ConfigError("patch size " + std::to_string(patch_size) + " does not divide resolution " +
                          std::to_string(resolution));
      }
    } else {
      if (resolution < 16) throw ConfigError("resolution too small for the stem stride chain");
      (void)stem_config().stage_extents(resolution);
    }
    if (variant == BlockVariant::vim_f_h && (heads == 0 || dim % heads)) {
      throw ConfigError("heads must divide dim");
    }
  }
}

namespace {

const char* stem_name(StemKind k) { return k == StemKind::conv ? "conv" : "patch"; }

}  // namespace

json ModelConfig::to_json() const {
  return json{{"variant", to_string(variant)},
              {"depth", depth},
              {"dim", dim},
              {"state", state},
              {"expand", expand},
              {"conv_width", conv_width},
              {"dt_rank", dt_rank},
              {"f_block_proportion", f_block_proportion},
              {"fft_mode", to_string(fft_mode)},
              {"heads", heads},
              {"use_pos_embed", use_pos_embed},
              {"use_class_token", use_class_token},
              {"stem", stem_name(stem)},
              {"patch_size", patch_size},
              {"stem_channels", stem_channels},
              {"resolution", resolution},
              {"in_channels", in_channels},
              {"num_classes", num_classes},
              {"stage_depths", stage_depths},
              {"stage_dims", stage_dims},
              {"d_skip", d_skip},
              {"discretization", rule == Discretization::zoh ? "zoh" : "euler"},
              {"alpha_init", alpha_init},
              {"beta_init", beta_init}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c = desk(parse_variant(j.value("variant", std::string("vim-f"))));
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "variant") continue;
      else if (key == "depth") c.depth = v.get<std::size_t>();
      else if (key == "dim") c.dim = v.get<std::size_t>();
      else if (key == "state") c.state = v.get<std::size_t>();
      else if (key == "expand") c.expand = v.get<std::size_t>();
      else if (key == "conv_width") c.conv_width = v.get<std::size_t>();
      else if (key == "dt_rank") c.dt_rank = v.get<std::size_t>();
      else if (key == "f_block_proportion") c.f_block_proportion = v.get<double>();
      else if (key == "fft_mode") c.fft_mode = parse_fft_mode(v.get<std::string>());
      else if (key == "heads") c.heads = v.get<std::size_t>();
      else if (key == "use_pos_embed") c.use_pos_embed = v.get<bool>();
      else if (key == "use_class_token") c.use_class_token = v.get<bool>();
      else if (key == "stem") {
        const auto s = v.get<std::string>();
        if (s != "conv" && s != "patch") throw ConfigError("stem must be 'conv' or 'patch'");
        c.stem = s == "conv" ? StemKind::conv : StemKind::patch;
      } else if (key == "patch_size") c.patch_size = v.get<std::size_t>();
      else if (key == "stem_channels") c.stem_channels = v.get<std::vector<std::size_t>>();
      else if (key == "resolution") c.resolution = v.get<std::size_t>();
      else if (key == "in_channels") c.in_channels = v.get<std::size_t>();
      else if (key == "num_classes") c.num_classes = v.get<std::size_t>();
      else if (key == "stage_depths") c.stage_depths = v.get<std::vector<std::size_t>>();
      else if (key == "stage_dims") c.stage_dims = v.get<std::vector<std::size_t>>();
      else if (key == "d_skip") c.d_skip = v.get<bool>();
      else if (key == "discretization") {
        const auto s = v.get<std::string>();
        if (s != "zoh" && s != "euler") throw ConfigError("discretization must be 'zoh' or 'euler'");
        c.rule = s == "zoh" ? Discretization::zoh : Discretization::euler;
      } else if (key == "alpha_init") c.alpha_init = v.get<double>();
      else if (key == "beta_init") c.beta_init = v.get<double>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config value: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::vector<std::string> ModelConfig::diff(const ModelConfig& other) const {
  const json a = to_json(), b = other.to_json();
  std::vector<std::string> out;
  for (const auto& [key, v] : a.items()) {
    if (b.at(key) != v) out.push_back(key);
  }
  return out;
}

}  // namespace vimf
