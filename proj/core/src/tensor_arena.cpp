#include "corellm/tensor_arena.hpp"

#include <cstdint>
#include <limits>
#include <string>

#include "corellm/error.hpp"

namespace corellm {

namespace {

std::size_t lane_size(std::initializer_list<std::int32_t> dims, const char* name) {
  std::size_t n = 1;
  for (const std::int32_t d : dims) {
    if (__builtin_mul_overflow(n, static_cast<std::size_t>(d), &n) ||
        n > std::numeric_limits<std::size_t>::max() / sizeof(float)) {
      throw Error(ErrorCode::kOverflow, std::string("run state lane ") + name + " is too large");
    }
  }
  return n;
}

AlignedBuffer<float> allocate_lane(RunState& s, const char* name, std::size_t count) {
  try {
    AlignedBuffer<float> buf(count);
    ++s.allocation_count;
    s.footprint_bytes += buf.capacity_bytes();
    return buf;
  } catch (const std::bad_alloc&) {
    throw Error(ErrorCode::kResource, std::string("cannot allocate run state lane ") + name +
                                          " (" + std::to_string(count * sizeof(float)) + " bytes)");
  }
}

}  // namespace

RunState allocate_run_state(const ModelConfig& c) {
  RunState s;
  const std::int32_t kv_dim = c.kv_dim();
  s.x = allocate_lane(s, "x", lane_size({c.dim}, "x"));
  s.xb = allocate_lane(s, "xb", lane_size({c.dim}, "xb"));
  s.xb2 = allocate_lane(s, "xb2", lane_size({c.dim}, "xb2"));
  s.hb = allocate_lane(s, "hb", lane_size({c.hidden_dim}, "hb"));
  s.hb2 = allocate_lane(s, "hb2", lane_size({c.hidden_dim}, "hb2"));
  s.q = allocate_lane(s, "q", lane_size({c.dim}, "q"));
  s.att = allocate_lane(s, "att", lane_size({c.n_heads, c.seq_len}, "att"));
  s.logits = allocate_lane(s, "logits", lane_size({c.vocab_size}, "logits"));
  s.key_cache =
      allocate_lane(s, "key_cache", lane_size({c.n_layers, c.seq_len, kv_dim}, "key_cache"));
  s.value_cache =
      allocate_lane(s, "value_cache", lane_size({c.n_layers, c.seq_len, kv_dim}, "value_cache"));
  return s;
}

}  // namespace corellm
