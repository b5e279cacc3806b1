#include "corellm/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corellm/error.hpp"

namespace corellm {

TransformerSession::TransformerSession(const ModelConfig& config, const MappedWeights& weights,
                                       KernelVariant variant)
    : config_(config), weights_(&weights), variant_(variant) {
  validate_config(config_);
  if (weights.layers.size() != static_cast<std::size_t>(config_.n_layers)) {
    throw Error(ErrorCode::kInvalidArgument, "weights do not match config layer count");
  }
  state_ = allocate_run_state(config_);
}

std::span<const float> TransformerSession::forward(int token, int pos) {
  if (token < 0 || token >= config_.vocab_size) {
    throw Error(ErrorCode::kIndex, "token " + std::to_string(token) + " outside vocabulary of " +
                                       std::to_string(config_.vocab_size));
  }
  if (pos < 0 || pos >= config_.seq_len) {
    throw Error(ErrorCode::kSequenceOverflow,
                "position " + std::to_string(pos) + " outside context of " +
                    std::to_string(config_.seq_len));
  }

  const MappedWeights& w = *weights_;
  RunState& s = state_;
  const auto dim = static_cast<std::size_t>(config_.dim);
  const auto kv_dim = static_cast<std::size_t>(config_.kv_dim());
  const auto seq = static_cast<std::size_t>(config_.seq_len);

  const std::span<float> x = s.x.span();
  const std::span<float> xb = s.xb.span();
  const std::span<float> xb2 = s.xb2.span();
  const std::span<float> hb = s.hb.span();
  const std::span<float> hb2 = s.hb2.span();
  const std::span<float> q = s.q.span();

  const auto embedding = w.token_embedding_table.subspan(static_cast<std::size_t>(token) * dim, dim);
  std::copy(embedding.begin(), embedding.end(), x.begin());

  for (int l = 0; l < config_.n_layers; ++l) {
    const LayerWeights& lw = w.layers[static_cast<std::size_t>(l)];
    const std::size_t cache_row = (static_cast<std::size_t>(l) * seq + static_cast<std::size_t>(pos)) * kv_dim;
    const std::span<float> k = s.key_cache.span().subspan(cache_row, kv_dim);
    const std::span<float> v = s.value_cache.span().subspan(cache_row, kv_dim);

    kernels::rmsnorm(xb, x, lw.rms_att_weight, variant_);
    kernels::gemv(q, lw.wq, xb, variant_);
    kernels::gemv(k, lw.wk, xb, variant_);
    kernels::gemv(v, lw.wv, xb, variant_);
    kernels::rope_apply(q, k, pos, config_.head_size(), variant_);

    attention(l, pos);

    kernels::gemv(xb2, lw.wo, xb, variant_);
    kernels::residual_add(x, xb2, variant_);

    kernels::rmsnorm(xb, x, lw.rms_ffn_weight, variant_);
    kernels::gemv(hb, lw.w1, xb, variant_);
    kernels::gemv(hb2, lw.w3, xb, variant_);
    kernels::swiglu_inplace(hb, hb2, variant_);
    kernels::gemv(xb, lw.w2, hb, variant_);
    kernels::residual_add(x, xb, variant_);
  }

  kernels::rmsnorm(x, x, w.rms_final_weight, variant_);
  kernels::gemv(s.logits.span(), w.wcls, x, variant_);
  return s.logits.span();
}

// Multi-head attention over cache rows 0..pos, writing the concatenated
// head outputs into xb. Query head h reads key/value head h / kv_group.
void TransformerSession::attention(int layer, int pos) {
  RunState& s = state_;
  const auto head_size = static_cast<std::size_t>(config_.head_size());
  const auto kv_dim = static_cast<std::size_t>(config_.kv_dim());
  const auto seq = static_cast<std::size_t>(config_.seq_len);
  const auto live = static_cast<std::size_t>(pos) + 1;
  const float root = std::sqrt(static_cast<float>(head_size));
  const std::size_t layer_base = static_cast<std::size_t>(layer) * seq * kv_dim;

  for (int h = 0; h < config_.n_heads; ++h) {
    const std::size_t kv_head = static_cast<std::size_t>(h / config_.kv_group());
    const auto q_h = std::span<const float>(s.q.data() + static_cast<std::size_t>(h) * head_size, head_size);
    const std::span<float> att(s.att.data() + static_cast<std::size_t>(h) * seq, live);

    for (std::size_t t = 0; t < live; ++t) {
      const float* k_t = s.key_cache.data() + layer_base + t * kv_dim + kv_head * head_size;
      att[t] = kernels::dot(q_h, {k_t, head_size}, variant_) / root;
    }
    kernels::softmax_inplace(att, variant_);

    const std::span<float> out(s.xb.data() + static_cast<std::size_t>(h) * head_size, head_size);
    std::fill(out.begin(), out.end(), 0.0f);
    for (std::size_t t = 0; t < live; ++t) {
      const float* v_t = s.value_cache.data() + layer_base + t * kv_dim + kv_head * head_size;
      kernels::axpy(out, att[t], {v_t, head_size}, variant_);
    }
  }
}

}  // namespace corellm
