#pragma once

// Checkpoint container:
//   line 1: "OREO-CKPT 1"
//   line 2: JSON manifest {"meta": {...}, "tensors": [{"name", "shape", "offset"}],
//           "payload_bytes": N}
//   rest:   little-endian IEEE-754 binary64 payload; offsets are byte offsets
//           into the payload.

#include <filesystem>
#include <json.hpp>

#include "oreo/numerics/param.hpp"

namespace oreo::num {

struct Checkpoint {
  nlohmann::json meta;
  ParamSet params;
};

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Copies stored values into an existing set; names and shapes must match exactly.
nlohmann::json load_into(const std::filesystem::path& path, ParamSet& params);

}  // namespace oreo::num
