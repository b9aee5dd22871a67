#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "vimf/model.hpp"

namespace vimf {

// Layout: "VIMFCKPT" | u64 LE header length | UTF-8 JSON header | payload of LE f64.
// Header: {format_version, config, seed, payload_bytes, params: [{name, shape, offset, checksum}]}
// where offset is in bytes from the start of the payload and checksum is FNV-1a 64 of the tensor's bytes.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);

// Rebuilds the model described by the header and fills its parameters.
Model load_checkpoint(const std::string& path);

// Fills an existing model; the stored config must match model.config().
void load_into(Model& model, const std::string& path);

nlohmann::json read_checkpoint_header(const std::string& path);

}  // namespace vimf
