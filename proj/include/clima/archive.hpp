#pragma once

#include <filesystem>

#include "clima/encoder.hpp"
#include "clima/tensor.hpp"

namespace clima {

// Weight archive layout, bit-exact:
//   bytes 0..7   little-endian uint64 manifest byte length
//   manifest     UTF-8 JSON: {"config": {...}, "tensors": {name: {"dtype":
//                "f32", "shape": [rows, cols], "offset": o, "length": l}}}
//   payload      raw little-endian float32 values, row-major
// Offsets are relative to the payload start and must not overlap.

// Throws ArchiveError on non-finite tensors or I/O failure.
void save_weights(const Params& params, const ModelConfig& config,
                  const std::filesystem::path& path);

struct LoadedModel {
  Params params;
  ModelConfig config;
};

// Validates the manifest against the embedded config before touching the
// payload; a failed load never returns a partial model.
LoadedModel load_weights(const std::filesystem::path& path);

}  // namespace clima
