#include "oreo/numerics/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "oreo/error.hpp"

namespace oreo::num {
namespace {

constexpr const char* kMagic = "OREO-CKPT 1";

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

struct Raw {
  nlohmann::json manifest;
  std::string payload;
};

Raw read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  std::string magic, manifest;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw ParseError("checkpoint: bad magic in " + path.string());
  }
  if (!std::getline(in, manifest)) throw ParseError("checkpoint: missing manifest");
  Raw raw;
  try {
    raw.manifest = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: manifest: ") + e.what());
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  raw.payload = rest.str();
  const auto expected = raw.manifest.at("payload_bytes").get<std::size_t>();
  if (raw.payload.size() != expected) {
    throw ParseError("checkpoint: payload is " + std::to_string(raw.payload.size()) +
                     " bytes, manifest says " + std::to_string(expected));
  }
  return raw;
}

Tensor read_tensor(const Raw& raw, const nlohmann::json& entry) {
  const auto shape = entry.at("shape").get<Shape>();
  const auto offset = entry.at("offset").get<std::size_t>();
  const std::size_t n = shape_size(shape);
  if (offset + 8 * n > raw.payload.size()) throw ParseError("checkpoint: tensor extends past payload");
  std::vector<double> data(n);
  const auto* base = reinterpret_cast<const unsigned char*>(raw.payload.data()) + offset;
  for (std::size_t i = 0; i < n; ++i) data[i] = get_le(base + 8 * i);
  return Tensor(shape, std::move(data));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::string payload;
  payload.reserve(params.num_scalars() * 8);
  for (const Parameter& p : params.all()) {
    manifest["tensors"].push_back(
        {{"name", p.name}, {"shape", p.value.shape()}, {"offset", payload.size()}});
    for (double v : p.value.data()) put_le(payload, v);
  }
  manifest["payload_bytes"] = payload.size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out << kMagic << '\n' << manifest.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Raw raw = read_raw(path);
  Checkpoint ck;
  ck.meta = raw.manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : raw.manifest.at("tensors")) {
    ck.params.add(entry.at("name").get<std::string>(), read_tensor(raw, entry));
  }
  return ck;
}

nlohmann::json load_into(const std::filesystem::path& path, ParamSet& params) {
  Raw raw = read_raw(path);
  std::size_t seen = 0;
  for (const auto& entry : raw.manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    Parameter* p = params.find(name);
    if (!p) throw ParseError("checkpoint: unexpected tensor '" + name + "'");
    Tensor t = read_tensor(raw, entry);
    if (t.shape() != p->value.shape()) {
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + shape_str(t.shape()) +
                       ", model expects " + shape_str(p->value.shape()));
    }
    p->value = std::move(t);
    ++seen;
  }
  if (seen != params.size()) throw ParseError("checkpoint: missing tensors for this model");
  return raw.manifest.value("meta", nlohmann::json::object());
}

}  // namespace oreo::num
