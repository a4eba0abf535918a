#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "red/numcore/tensor.hpp"

namespace red::nc {

/// Binary container: 8-byte magic "REDCKPT1", u64 little-endian header
/// length, a JSON header {"meta": ..., "tensors": [{name, shape, offset,
/// count}]}, then every tensor as raw little-endian float64 in header order.
struct CheckpointData {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

std::string encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(const std::string& bytes);

/// Atomic: writes a temp file and renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace red::nc
