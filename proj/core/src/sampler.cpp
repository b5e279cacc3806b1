#include "corellm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corellm/error.hpp"
#include "corellm/kernels.hpp"

namespace corellm {

int argmax(std::span<const float> x) {
  int best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int sample_mult(std::span<const float> probs, float coin) {
  float cdf = 0.0f;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (coin < cdf) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;  // rounding
}

int sample_top_p(std::span<const float> probs, float top_p, float coin,
                 std::span<NucleusScratch> scratch) {
  const std::size_t n = probs.size();
  for (std::size_t i = 0; i < n; ++i) scratch[i] = {probs[i], static_cast<int>(i)};
  std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n),
            [](const NucleusScratch& a, const NucleusScratch& b) {
              return a.prob > b.prob || (a.prob == b.prob && a.index < b.index);
            });

  // Smallest prefix whose mass reaches top_p.
  float mass = 0.0f;
  std::size_t last = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    mass += scratch[i].prob;
    if (mass >= top_p) {
      last = i;
      break;
    }
  }

  const float r = coin * mass;
  float cdf = 0.0f;
  for (std::size_t i = 0; i <= last; ++i) {
    cdf += scratch[i].prob;
    if (r < cdf) return scratch[i].index;
  }
  return scratch[last].index;
}

Sampler::Sampler(int vocab_size, const SamplerConfig& config) : config_(config), rng_(config.seed) {
  if (vocab_size < 1) throw Error(ErrorCode::kInvalidArgument, "vocab size must be at least 1");
  if (!(config.temperature >= 0.0f) || !std::isfinite(config.temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be finite and nonnegative");
  }
  if (!(config.top_p > 0.0f && config.top_p <= 1.0f)) {
    throw Error(ErrorCode::kInvalidArgument, "top_p must lie in (0, 1]");
  }
  probs_.resize(static_cast<std::size_t>(vocab_size));
  sorted_.resize(static_cast<std::size_t>(vocab_size));
}

int Sampler::sample(std::span<const float> logits) {
  if (logits.size() != probs_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "logits length " + std::to_string(logits.size()) +
                                                 " does not match vocab size");
  }
  for (const float v : logits) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidLogits, "non-finite logit");
  }
  if (config_.temperature == 0.0f) return argmax(logits);

  for (std::size_t i = 0; i < logits.size(); ++i) probs_[i] = logits[i] / config_.temperature;
  kernels::softmax_inplace(probs_, KernelVariant::kScalar);
  const float coin = rng_.next_unit();
  if (config_.top_p >= 1.0f) return sample_mult(probs_, coin);
  return sample_top_p(probs_, config_.top_p, coin, sorted_);
}

}  // namespace corellm
