#pragma once

#include <span>

#include "corellm/config.hpp"
#include "corellm/kernels.hpp"
#include "corellm/model_format.hpp"
#include "corellm/tensor_arena.hpp"

namespace corellm {

// One generation session over shared, immutable weights. The weights must
// outlive the session; the RunState is private to it.
class TransformerSession {
 public:
  TransformerSession(const ModelConfig& config, const MappedWeights& weights,
                     KernelVariant variant = KernelVariant::kVectorized);

  // Runs the decoder for one token at one position and returns the logits.
  // Throws kIndex for an out-of-range token and kSequenceOverflow when
  // pos >= seq_len. Does not allocate.
  std::span<const float> forward(int token, int pos);

  const ModelConfig& config() const noexcept { return config_; }
  const MappedWeights& weights() const noexcept { return *weights_; }
  KernelVariant variant() const noexcept { return variant_; }
  const RunState& state() const noexcept { return state_; }
  RunState& mutable_state() noexcept { return state_; }

 private:
  void attention(int layer, int pos);

  ModelConfig config_;
  const MappedWeights* weights_;
  KernelVariant variant_;
  RunState state_;
};

}  // namespace corellm
