#include "corellm/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>

#if defined(__SSE2__)
#include <emmintrin.h>
#define CORELLM_SIMD_SSE2 1
#elif defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>
#define CORELLM_SIMD_NEON 1
#endif

namespace corellm {

const char* to_string(KernelVariant variant) noexcept {
  return variant == KernelVariant::kScalar ? "scalar" : "vectorized";
}

bool has_simd128() noexcept {
#if defined(CORELLM_SIMD_SSE2) || defined(CORELLM_SIMD_NEON)
  return true;
#else
  return false;
#endif
}

namespace kernels {
namespace {

constexpr std::size_t kBlock = 16;

// ---------------------------------------------------------------------------
// Four-lane FP64 accumulator fed with FP32 products. Three backends with the
// same lane layout and the same fold order:
//   lanes (l0, l1, l2, l3); horizontal sum = (l0 + l2) + (l1 + l3).

#if defined(CORELLM_SIMD_SSE2)

struct Acc4 {
  __m128d lo = _mm_setzero_pd();  // l0, l1
  __m128d hi = _mm_setzero_pd();  // l2, l3

  void add(__m128 p) {
    lo = _mm_add_pd(lo, _mm_cvtps_pd(p));
    hi = _mm_add_pd(hi, _mm_cvtps_pd(_mm_movehl_ps(p, p)));
  }
  void add_products(const float* a, const float* b) {
    add(_mm_mul_ps(_mm_loadu_ps(a), _mm_loadu_ps(b)));
  }
  void add_values(const float* a) { add(_mm_loadu_ps(a)); }
  Acc4 operator+(const Acc4& o) const { return {_mm_add_pd(lo, o.lo), _mm_add_pd(hi, o.hi)}; }
  double horizontal() const {
    const __m128d t = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(t) + _mm_cvtsd_f64(_mm_unpackhi_pd(t, t));
  }
};

#elif defined(CORELLM_SIMD_NEON)

struct Acc4 {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);

  void add(float32x4_t p) {
    lo = vaddq_f64(lo, vcvt_f64_f32(vget_low_f32(p)));
    hi = vaddq_f64(hi, vcvt_high_f64_f32(p));
  }
  void add_products(const float* a, const float* b) { add(vmulq_f32(vld1q_f32(a), vld1q_f32(b))); }
  void add_values(const float* a) { add(vld1q_f32(a)); }
  Acc4 operator+(const Acc4& o) const { return {vaddq_f64(lo, o.lo), vaddq_f64(hi, o.hi)}; }
  double horizontal() const {
    const float64x2_t t = vaddq_f64(lo, hi);
    return vgetq_lane_f64(t, 0) + vgetq_lane_f64(t, 1);
  }
};

#else

struct Acc4 {
  double l[4] = {0.0, 0.0, 0.0, 0.0};

  void add_products(const float* a, const float* b) {
    for (int i = 0; i < 4; ++i) l[i] += static_cast<double>(a[i] * b[i]);
  }
  void add_values(const float* a) {
    for (int i = 0; i < 4; ++i) l[i] += static_cast<double>(a[i]);
  }
  Acc4 operator+(const Acc4& o) const {
    Acc4 r;
    for (int i = 0; i < 4; ++i) r.l[i] = l[i] + o.l[i];
    return r;
  }
  double horizontal() const { return (l[0] + l[2]) + (l[1] + l[3]); }
};

#endif

double dot_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(a[j] * b[j]);
  return acc;
}

// Four independent accumulators hide the add latency; each 16-element block
// feeds all four before the next block starts.
double dot_blocked(const float* a, const float* b, std::size_t n) {
  Acc4 s0, s1, s2, s3;
  std::size_t j = 0;
  for (; j + kBlock <= n; j += kBlock) {
    s0.add_products(a + j, b + j);
    s1.add_products(a + j + 4, b + j + 4);
    s2.add_products(a + j + 8, b + j + 8);
    s3.add_products(a + j + 12, b + j + 12);
  }
  double acc = ((s0 + s1) + (s2 + s3)).horizontal();
  for (; j < n; ++j) acc += static_cast<double>(a[j] * b[j]);
  return acc;
}

double sum_scalar(const float* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(a[j]);
  return acc;
}

double sum_blocked(const float* a, std::size_t n) {
  Acc4 s0, s1, s2, s3;
  std::size_t j = 0;
  for (; j + kBlock <= n; j += kBlock) {
    s0.add_values(a + j);
    s1.add_values(a + j + 4);
    s2.add_values(a + j + 8);
    s3.add_values(a + j + 12);
  }
  double acc = ((s0 + s1) + (s2 + s3)).horizontal();
  for (; j < n; ++j) acc += static_cast<double>(a[j]);
  return acc;
}

double dot_impl(const float* a, const float* b, std::size_t n, KernelVariant variant) {
  return variant == KernelVariant::kScalar ? dot_scalar(a, b, n) : dot_blocked(a, b, n);
}

// ---------------------------------------------------------------------------
// Elementwise helpers. Both variants perform the same FP32 operation per
// element, so their results are bit-identical.

void mul_scalar_into(float* out, const float* x, const float* w, float s, std::size_t n,
                     KernelVariant variant) {
  std::size_t i = 0;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    const __m128 vs = _mm_set1_ps(s);
    for (; i + 4 <= n; i += 4) {
      const __m128 p = _mm_mul_ps(_mm_loadu_ps(x + i), _mm_loadu_ps(w + i));
      _mm_storeu_ps(out + i, _mm_mul_ps(p, vs));
    }
#elif defined(CORELLM_SIMD_NEON)
    const float32x4_t vs = vdupq_n_f32(s);
    for (; i + 4 <= n; i += 4) {
      const float32x4_t p = vmulq_f32(vld1q_f32(x + i), vld1q_f32(w + i));
      vst1q_f32(out + i, vmulq_f32(p, vs));
    }
#endif
  }
  for (; i < n; ++i) out[i] = (x[i] * w[i]) * s;
}

}  // namespace

void gemv(std::span<float> out, std::span<const float> w, std::span<const float> x,
          KernelVariant variant) {
  const std::size_t n = x.size();
  assert(w.size() >= out.size() * n);
  const float* row = w.data();
  for (std::size_t i = 0; i < out.size(); ++i, row += n) {
    out[i] = static_cast<float>(dot_impl(row, x.data(), n, variant));
  }
}

float dot(std::span<const float> a, std::span<const float> b, KernelVariant variant) {
  assert(a.size() == b.size());
  return static_cast<float>(dot_impl(a.data(), b.data(), a.size(), variant));
}

void rmsnorm(std::span<float> out, std::span<const float> x, std::span<const float> weight,
             KernelVariant variant) {
  const std::size_t n = x.size();
  assert(n >= 1 && weight.size() == n && out.size() == n);
  const double ss = dot_impl(x.data(), x.data(), n, variant);
  const float mean_sq = static_cast<float>(ss / static_cast<double>(n)) + kRmsNormEpsilon;
  const float inv = 1.0f / std::sqrt(mean_sq);
  mul_scalar_into(out.data(), x.data(), weight.data(), inv, n, variant);
}

void softmax_inplace(std::span<float> x, KernelVariant variant) {
  const std::size_t n = x.size();
  if (n == 0) return;
  float max_val = x[0];
  std::size_t i = 1;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    if (n >= 4) {
      __m128 vmax = _mm_loadu_ps(x.data());
      for (i = 4; i + 4 <= n; i += 4) vmax = _mm_max_ps(vmax, _mm_loadu_ps(x.data() + i));
      alignas(16) float lanes[4];
      _mm_store_ps(lanes, vmax);
      max_val = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
    }
#elif defined(CORELLM_SIMD_NEON)
    if (n >= 4) {
      float32x4_t vmax = vld1q_f32(x.data());
      for (i = 4; i + 4 <= n; i += 4) vmax = vmaxq_f32(vmax, vld1q_f32(x.data() + i));
      max_val = vmaxvq_f32(vmax);
    }
#endif
  }
  for (; i < n; ++i) max_val = std::max(max_val, x[i]);

  for (std::size_t j = 0; j < n; ++j) x[j] = std::exp(x[j] - max_val);

  const double sum = variant == KernelVariant::kScalar ? sum_scalar(x.data(), n)
                                                       : sum_blocked(x.data(), n);
  const float total = static_cast<float>(sum);
  std::size_t j = 0;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    const __m128 vt = _mm_set1_ps(total);
    for (; j + 4 <= n; j += 4) _mm_storeu_ps(x.data() + j, _mm_div_ps(_mm_loadu_ps(x.data() + j), vt));
#elif defined(CORELLM_SIMD_NEON)
    const float32x4_t vt = vdupq_n_f32(total);
    for (; j + 4 <= n; j += 4) vst1q_f32(x.data() + j, vdivq_f32(vld1q_f32(x.data() + j), vt));
#endif
  }
  for (; j < n; ++j) x[j] /= total;
}

namespace {

struct Rotation {
  float cos;
  float sin;
};

Rotation rope_rotation(std::size_t i, int pos, int head_size) {
  const auto h = static_cast<float>(static_cast<int>(i) % head_size);
  const float freq = std::pow(10000.0f, -h / static_cast<float>(head_size));
  const float theta = static_cast<float>(pos) * freq;
  return {std::cos(theta), std::sin(theta)};
}

void rotate_pairs(std::span<float> v, int pos, int head_size, KernelVariant variant) {
  const std::size_t n = v.size();
  float* p = v.data();
  std::size_t i = 0;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    for (; i + 4 <= n; i += 4) {
      const Rotation r0 = rope_rotation(i, pos, head_size);
      const Rotation r1 = rope_rotation(i + 2, pos, head_size);
      const __m128 val = _mm_loadu_ps(p + i);  // a0 b0 a1 b1
      const __m128 swapped = _mm_shuffle_ps(val, val, _MM_SHUFFLE(2, 3, 0, 1));
      const __m128 c = _mm_setr_ps(r0.cos, r0.cos, r1.cos, r1.cos);
      const __m128 s = _mm_setr_ps(-r0.sin, r0.sin, -r1.sin, r1.sin);
      _mm_storeu_ps(p + i, _mm_add_ps(_mm_mul_ps(val, c), _mm_mul_ps(swapped, s)));
    }
#elif defined(CORELLM_SIMD_NEON)
    for (; i + 4 <= n; i += 4) {
      const Rotation r0 = rope_rotation(i, pos, head_size);
      const Rotation r1 = rope_rotation(i + 2, pos, head_size);
      const float32x4_t val = vld1q_f32(p + i);
      const float32x4_t swapped = vrev64q_f32(val);
      const float cv[4] = {r0.cos, r0.cos, r1.cos, r1.cos};
      const float sv[4] = {-r0.sin, r0.sin, -r1.sin, r1.sin};
      vst1q_f32(p + i, vaddq_f32(vmulq_f32(val, vld1q_f32(cv)), vmulq_f32(swapped, vld1q_f32(sv))));
    }
#endif
  }
  for (; i + 1 < n; i += 2) {
    const Rotation r = rope_rotation(i, pos, head_size);
    const float a = p[i];
    const float b = p[i + 1];
    p[i] = a * r.cos - b * r.sin;
    p[i + 1] = b * r.cos + a * r.sin;
  }
}

}  // namespace

void rope_apply(std::span<float> q, std::span<float> k, int pos, int head_size,
                KernelVariant variant) {
  assert(head_size > 0 && head_size % 2 == 0);
  rotate_pairs(q, pos, head_size, variant);
  rotate_pairs(k, pos, head_size, variant);
}

void swiglu_inplace(std::span<float> hb, std::span<const float> hb2, KernelVariant variant) {
  const std::size_t n = hb.size();
  assert(hb2.size() == n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = hb[i];
    hb[i] = v * (1.0f / (1.0f + std::exp(-v)));
  }
  std::size_t i = 0;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    for (; i + 4 <= n; i += 4) {
      _mm_storeu_ps(hb.data() + i, _mm_mul_ps(_mm_loadu_ps(hb.data() + i), _mm_loadu_ps(hb2.data() + i)));
    }
#elif defined(CORELLM_SIMD_NEON)
    for (; i + 4 <= n; i += 4) {
      vst1q_f32(hb.data() + i, vmulq_f32(vld1q_f32(hb.data() + i), vld1q_f32(hb2.data() + i)));
    }
#endif
  }
  for (; i < n; ++i) hb[i] = hb[i] * hb2[i];
}

void residual_add(std::span<float> x, std::span<const float> delta, KernelVariant variant) {
  const std::size_t n = x.size();
  assert(delta.size() == n);
  std::size_t i = 0;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    for (; i + 4 <= n; i += 4) {
      _mm_storeu_ps(x.data() + i, _mm_add_ps(_mm_loadu_ps(x.data() + i), _mm_loadu_ps(delta.data() + i)));
    }
#elif defined(CORELLM_SIMD_NEON)
    for (; i + 4 <= n; i += 4) {
      vst1q_f32(x.data() + i, vaddq_f32(vld1q_f32(x.data() + i), vld1q_f32(delta.data() + i)));
    }
#endif
  }
  for (; i < n; ++i) x[i] = x[i] + delta[i];
}

void axpy(std::span<float> y, float a, std::span<const float> v, KernelVariant variant) {
  const std::size_t n = y.size();
  assert(v.size() == n);
  std::size_t i = 0;
  if (variant == KernelVariant::kVectorized) {
#if defined(CORELLM_SIMD_SSE2)
    const __m128 va = _mm_set1_ps(a);
    for (; i + 4 <= n; i += 4) {
      const __m128 p = _mm_mul_ps(va, _mm_loadu_ps(v.data() + i));
      _mm_storeu_ps(y.data() + i, _mm_add_ps(_mm_loadu_ps(y.data() + i), p));
    }
#elif defined(CORELLM_SIMD_NEON)
    const float32x4_t va = vdupq_n_f32(a);
    for (; i + 4 <= n; i += 4) {
      const float32x4_t p = vmulq_f32(va, vld1q_f32(v.data() + i));
      vst1q_f32(y.data() + i, vaddq_f32(vld1q_f32(y.data() + i), p));
    }
#endif
  }
  for (; i < n; ++i) y[i] = y[i] + a * v[i];
}

}  // namespace kernels
}  // namespace corellm
