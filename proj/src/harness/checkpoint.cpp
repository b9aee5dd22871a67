#include "vimf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vimf/errors.hpp"
#include "vimf/rng.hpp"

namespace vimf {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'V', 'I', 'M', 'F', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string encode(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double d : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

struct RawCheckpoint {
  json header;
  std::string payload;
};

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CheckpointError("'" + path + "' is not a checkpoint (bad magic or truncated prefix)");
  }
  const std::uint64_t header_len = get_u64(reinterpret_cast<const unsigned char*>(bytes.data()) + 8);
  if (header_len > bytes.size() - 16) throw CheckpointError("truncated checkpoint header");
  RawCheckpoint raw;
  try {
    raw.header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (!raw.header.is_object() || !raw.header.contains("format_version")) {
    throw CheckpointError("checkpoint header lacks a format version");
  }
  const int version = raw.header["format_version"].get<int>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  raw.payload = bytes.substr(16 + header_len);
  const auto expected = raw.header.at("payload_bytes").get<std::uint64_t>();
  if (raw.payload.size() < expected) {
    throw CheckpointError("truncated checkpoint payload: " + std::to_string(raw.payload.size()) + " of " +
                          std::to_string(expected) + " bytes");
  }
  if (raw.payload.size() > expected) throw CheckpointError("checkpoint payload has trailing bytes");
  return raw;
}

void fill_parameters(Model& model, const RawCheckpoint& raw) {
  const json& manifest = raw.header.at("params");
  auto& params = model.parameters();
  if (manifest.size() != params.size()) {
    throw CheckpointError("manifest lists " + std::to_string(manifest.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& m = manifest[i];
    Parameter& p = params[i];
    const auto name = m.at("name").get<std::string>();
    if (name != p.name) throw CheckpointError("manifest entry " + std::to_string(i) + " is '" + name + "', expected '" + p.name + "'");
    const auto shape = m.at("shape").get<Shape>();
    if (shape != p.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": stored " + shape_str(shape) + ", model " +
                            shape_str(p.tensor.shape()));
    }
    const auto offset = m.at("offset").get<std::size_t>();
    const std::size_t bytes = p.tensor.numel() * 8;
    if (offset != expected_offset || offset + bytes > raw.payload.size()) {
      throw CheckpointError("manifest offset for " + name + " is inconsistent with the payload");
    }
    const char* src = raw.payload.data() + offset;
    if (hex64(fnv1a64(src, bytes)) != m.at("checksum").get<std::string>()) {
      throw CheckpointError("checksum mismatch in tensor " + name + " (payload corrupted)");
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const std::uint64_t bits = get_u64(reinterpret_cast<const unsigned char*>(src) + 8 * k);
      std::memcpy(&dst[k], &bits, 8);
    }
    expected_offset += bytes;
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::string payload;
  json manifest = json::array();
  for (const auto& p : model.parameters()) {
    const std::string bytes = encode(p.tensor.data());
    manifest.push_back({{"name", p.name},
                        {"shape", p.tensor.shape()},
                        {"offset", payload.size()},
                        {"checksum", hex64(fnv1a64(bytes.data(), bytes.size()))}});
    payload += bytes;
  }
  const json header{{"format_version", kCheckpointVersion},
                    {"config", model.config().to_json()},
                    {"seed", model.seed()},
                    {"payload_bytes", payload.size()},
                    {"params", manifest}};
  const std::string head = header.dump();
  std::string out(kMagic, 8);
  put_u64(out, head.size());
  out += head;
  out += payload;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

json read_checkpoint_header(const std::string& path) {
  try {
    return read_raw(path).header;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
}

Model load_checkpoint(const std::string& path) try {
  const RawCheckpoint raw = read_raw(path);
  Model model(ModelConfig::from_json(raw.header.at("config")), raw.header.at("seed").get<std::uint64_t>());
  fill_parameters(model, raw);
  return model;
} catch (const json::exception& e) {
  throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
}

void load_into(Model& model, const std::string& path) try {
  const RawCheckpoint raw = read_raw(path);
  const ModelConfig stored = ModelConfig::from_json(raw.header.at("config"));
  const auto fields = model.config().diff(stored);
  if (!fields.empty()) {
    std::string list;
    for (const auto& f : fields) list += (list.empty() ? "" : ", ") + f;
    throw CheckpointError("checkpoint config differs from the model in: " + list);
  }
  fill_parameters(model, raw);
} catch (const json::exception& e) {
  throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
}

}  // namespace vimf
