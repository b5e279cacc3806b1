#pragma once

#include <cstddef>
#include <span>

namespace corellm {

// Every kernel exists in a scalar reference form and a 128-bit vector form
// with the same signature.
enum class KernelVariant { kScalar, kVectorized };

const char* to_string(KernelVariant variant) noexcept;

// True when the vectorized kernels run on real 128-bit vector registers (SSE2
// or AArch64 NEON). Otherwise they run a scalar emulation with the same
// accumulation order.
bool has_simd128() noexcept;

namespace kernels {

// out[i] = sum_j w[i*n + j] * x[j] for i in [0, out.size()), n = x.size().
// Products are formed in FP32 and accumulated in FP64. The scalar variant
// sums left to right. The vectorized variant keeps four independent 4-lane
// accumulators over 16-element blocks, folds them pairwise, reduces
// horizontally, and adds the n % 16 tail last.
void gemv(std::span<float> out, std::span<const float> w, std::span<const float> x,
          KernelVariant variant);

// Dot product with the same accumulation contract as one gemv row.
float dot(std::span<const float> a, std::span<const float> b, KernelVariant variant);

// out = x * weight / sqrt(mean(x^2) + 1e-5). out may alias x.
void rmsnorm(std::span<float> out, std::span<const float> x, std::span<const float> weight,
             KernelVariant variant);

inline constexpr float kRmsNormEpsilon = 1e-5f;

// Max-subtracted softmax over the whole span.
void softmax_inplace(std::span<float> x, KernelVariant variant);

// Rotates consecutive (even, odd) pairs of q and k by pos * 10000^(-h/head_size)
// where h is the pair's offset within its head.
void rope_apply(std::span<float> q, std::span<float> k, int pos, int head_size,
                KernelVariant variant);

// hb <- silu(hb) * hb2.
void swiglu_inplace(std::span<float> hb, std::span<const float> hb2, KernelVariant variant);

// x <- x + delta.
void residual_add(std::span<float> x, std::span<const float> delta, KernelVariant variant);

// y <- y + a * v.
void axpy(std::span<float> y, float a, std::span<const float> v, KernelVariant variant);

}  // namespace kernels
}  // namespace corellm
