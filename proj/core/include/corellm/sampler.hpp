#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace corellm {

struct SamplerConfig {
  float temperature = 0.0f;
  float top_p = 1.0f;
  std::uint64_t seed = 42;
};

// xorshift* generator with pinned constants, so every port of the sampler
// reproduces the same token stream for a given seed.
class Rng64 {
 public:
  static constexpr std::uint64_t kZeroSeedReplacement = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kMultiplier = 2685821657736338717ULL;

  explicit Rng64(std::uint64_t seed) noexcept
      : state_(seed == 0 ? kZeroSeedReplacement : seed) {}

  std::uint32_t next_u32() noexcept {
    state_ ^= state_ << 13;
    state_ ^= state_ >> 7;
    state_ ^= state_ << 17;
    return static_cast<std::uint32_t>((state_ * kMultiplier) >> 32);
  }

  // Uniform in [0, 1) with 24 bits of resolution.
  float next_unit() noexcept { return static_cast<float>(next_u32() >> 8) / 16777216.0f; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

struct NucleusScratch {
  float prob;
  int index;
};

// Greedy, temperature and nucleus sampling. Scratch space is sized once for
// the vocabulary so sample() never allocates.
class Sampler {
 public:
  // Throws kInvalidArgument unless temperature >= 0, 0 < top_p <= 1 and
  // vocab_size >= 1.
  Sampler(int vocab_size, const SamplerConfig& config);

  // Throws kInvalidLogits on non-finite input. logits.size() must equal the
  // vocab size.
  int sample(std::span<const float> logits);

  const SamplerConfig& config() const noexcept { return config_; }
  Rng64& rng() noexcept { return rng_; }

 private:
  SamplerConfig config_;
  Rng64 rng_;
  std::vector<float> probs_;
  std::vector<NucleusScratch> sorted_;
};

// Lowest index wins ties.
int argmax(std::span<const float> x);

// Inverse-CDF draw from a normalized distribution.
int sample_mult(std::span<const float> probs, float coin);

// Nucleus draw: the smallest descending-probability prefix (index ascending
// on ties) whose mass reaches top_p, renormalized. scratch must hold
// probs.size() entries.
int sample_top_p(std::span<const float> probs, float top_p, float coin,
                 std::span<NucleusScratch> scratch);

}  // namespace corellm
