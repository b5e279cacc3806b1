#pragma once

#include <cstddef>
#include <cstdlib>
#include <cstring>
#include <new>
#include <span>
#include <string_view>
#include <type_traits>
#include <utility>

#include "corellm/config.hpp"

namespace corellm {

inline constexpr std::size_t kCacheLine = 64;

// Zero-filled, cache-line aligned heap array. Capacity is rounded up to a
// whole number of cache lines so vector loads never straddle the tail.
template <typename T>
class AlignedBuffer {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  AlignedBuffer() = default;

  // Throws std::bad_alloc on failure.
  explicit AlignedBuffer(std::size_t count) : size_(count) {
    if (count == 0) return;
    const std::size_t bytes = padded_bytes(count);
    data_ = static_cast<T*>(std::aligned_alloc(kCacheLine, bytes));
    if (data_ == nullptr) throw std::bad_alloc();
    std::memset(static_cast<void*>(data_), 0, bytes);
  }

  AlignedBuffer(AlignedBuffer&& other) noexcept
      : data_(std::exchange(other.data_, nullptr)), size_(std::exchange(other.size_, 0)) {}

  AlignedBuffer& operator=(AlignedBuffer&& other) noexcept {
    if (this != &other) {
      std::free(data_);
      data_ = std::exchange(other.data_, nullptr);
      size_ = std::exchange(other.size_, 0);
    }
    return *this;
  }

  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;

  ~AlignedBuffer() { std::free(data_); }

  T* data() noexcept { return data_; }
  const T* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  std::size_t capacity_bytes() const noexcept { return size_ == 0 ? 0 : padded_bytes(size_); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> span() noexcept { return {data_, size_}; }
  std::span<const T> span() const noexcept { return {data_, size_}; }

  static std::size_t padded_bytes(std::size_t count) noexcept {
    const std::size_t raw = count * sizeof(T);
    return (raw + kCacheLine - 1) / kCacheLine * kCacheLine;
  }

 private:
  T* data_ = nullptr;
  std::size_t size_ = 0;
};

// The activation scratchpad. Each lane is its own allocation; nothing here is
// resized once a session starts.
struct RunState {
  AlignedBuffer<float> x;            // [dim] residual stream
  AlignedBuffer<float> xb;           // [dim]
  AlignedBuffer<float> xb2;          // [dim]
  AlignedBuffer<float> hb;           // [hidden_dim]
  AlignedBuffer<float> hb2;          // [hidden_dim]
  AlignedBuffer<float> q;            // [dim]
  AlignedBuffer<float> att;          // [n_heads x seq_len]
  AlignedBuffer<float> logits;       // [vocab_size]
  AlignedBuffer<float> key_cache;    // [n_layers x seq_len x kv_dim]
  AlignedBuffer<float> value_cache;  // [n_layers x seq_len x kv_dim]

  std::size_t allocation_count = 0;
  std::size_t footprint_bytes = 0;

  // Visits each lane with its field name.
  template <typename Fn>
  void for_each_buffer(Fn&& fn) const {
    fn(std::string_view("x"), x);
    fn(std::string_view("xb"), xb);
    fn(std::string_view("xb2"), xb2);
    fn(std::string_view("hb"), hb);
    fn(std::string_view("hb2"), hb2);
    fn(std::string_view("q"), q);
    fn(std::string_view("att"), att);
    fn(std::string_view("logits"), logits);
    fn(std::string_view("key_cache"), key_cache);
    fn(std::string_view("value_cache"), value_cache);
  }
};

// Throws Error(kResource) naming the lane that could not be allocated, or
// Error(kOverflow) if a lane's element count does not fit in size_t.
RunState allocate_run_state(const ModelConfig& config);

}  // namespace corellm
