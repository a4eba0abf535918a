#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace red {

/// Architecture hyperparameters. Defaults follow the published setup.
struct ModelConfig {
  std::size_t dim = 128;
  std::size_t encoder_layers = 6;
  std::size_t decoder_layers = 6;
  std::size_t heads = 8;
  std::vector<std::size_t> gat_heads = {8, 16, 1};
  std::size_t ffn_dim = 0;  // 0 means 4 * dim
  double dropout = 0.1;
  double lambda2 = 0.5;
  bool tie_heads = true;
  bool mask_time_encoding = true;  // decoder mask inputs carry their step's time encoding
  std::size_t num_segments = 0;
  std::size_t num_users = 0;
  std::uint64_t seed = 0;

  std::size_t vocab_size() const noexcept { return num_segments + 3; }
  std::size_t ffn_width() const noexcept { return ffn_dim == 0 ? 4 * dim : ffn_dim; }
  std::int32_t start_token() const noexcept { return static_cast<std::int32_t>(num_segments); }
  std::int32_t end_token() const noexcept { return static_cast<std::int32_t>(num_segments + 1); }
  std::int32_t extract_token() const noexcept { return static_cast<std::int32_t>(num_segments + 2); }

  /// Throws ValidationError on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace red
