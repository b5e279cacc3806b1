#pragma once

#include <cstdint>

namespace corellm {

// Architecture hyperparameters read from the checkpoint header.
struct ModelConfig {
  std::int32_t dim = 0;
  std::int32_t hidden_dim = 0;
  std::int32_t n_layers = 0;
  std::int32_t n_heads = 0;
  std::int32_t n_kv_heads = 0;
  std::int32_t vocab_size = 0;
  std::int32_t seq_len = 0;

  std::int32_t head_size() const noexcept { return dim / n_heads; }
  std::int32_t kv_dim() const noexcept { return dim / n_heads * n_kv_heads; }
  // Query heads per key/value head.
  std::int32_t kv_group() const noexcept { return n_heads / n_kv_heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace corellm
