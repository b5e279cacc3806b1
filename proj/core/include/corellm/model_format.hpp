#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corellm/config.hpp"
#include "corellm/tensor_arena.hpp"

namespace corellm {

inline constexpr std::size_t kHeaderBytes = 28;

struct ParsedHeader {
  ModelConfig config;
  // A negative stored vocab_size marks a checkpoint exported with a separate
  // classifier matrix.
  bool explicit_untied = false;
};

// Decodes the seven little-endian int32 header fields. Throws kFormat on short
// input and kInvalidConfig when a field (after |vocab_size|) is nonpositive or
// the head geometry is inconsistent.
ParsedHeader parse_header(std::span<const std::byte> bytes);

// Throws kInvalidConfig unless all structural invariants hold.
void validate_config(const ModelConfig& config);

// Payload bytes (excluding the header) of a checkpoint with a separate wcls,
// including the legacy positional table. Throws kOverflow.
std::uint64_t expected_payload_size(const ModelConfig& config);
// Same, for a checkpoint whose classifier is tied to the embedding table.
std::uint64_t tied_payload_size(const ModelConfig& config);

struct LayerWeights {
  std::span<const float> rms_att_weight;  // [dim]
  std::span<const float> wq;              // [dim x dim]
  std::span<const float> wk;              // [kv_dim x dim]
  std::span<const float> wv;              // [kv_dim x dim]
  std::span<const float> wo;              // [dim x dim]
  std::span<const float> rms_ffn_weight;  // [dim]
  std::span<const float> w1;              // [hidden_dim x dim]
  std::span<const float> w2;              // [dim x hidden_dim]
  std::span<const float> w3;              // [hidden_dim x dim]
};

struct MappedWeights {
  std::span<const float> token_embedding_table;  // [vocab_size x dim]
  std::vector<LayerWeights> layers;
  std::span<const float> rms_final_weight;  // [dim]
  std::span<const float> wcls;              // [vocab_size x dim]
  bool tied = false;

  // Visits every view in on-disk order (tensor kind major, layer minor). The
  // tied wcls is visited last and reports the embedding's file offset.
  void for_each_tensor(
      const std::function<void(std::string_view name, std::span<const float> view)>& fn) const;
};

struct AlignmentEntry {
  std::string name;
  std::uint64_t file_offset = 0;
  std::uint32_t residue = 0;  // address of the view mod 64
};

struct AlignmentReport {
  std::vector<AlignmentEntry> entries;
  bool all_64_aligned = false;
};

// File offsets are recomputed from the on-disk layout; residues come from the
// addresses the kernels will actually read.
AlignmentReport audit_alignment(const MappedWeights& weights, const ModelConfig& config,
                                std::size_t header_len = kHeaderBytes);

struct LoadOptions {
  // Copy every tensor into a 64-byte aligned arena instead of reading the
  // mapping directly.
  bool aligned_copy = false;
};

// Owns the read-only file mapping (or the aligned arena) that backs a
// MappedWeights. Move-only; the mapping is released exactly once no matter
// how many views alias it.
class Checkpoint {
 public:
  Checkpoint() = default;
  Checkpoint(Checkpoint&& other) noexcept;
  Checkpoint& operator=(Checkpoint&& other) noexcept;
  Checkpoint(const Checkpoint&) = delete;
  Checkpoint& operator=(const Checkpoint&) = delete;
  ~Checkpoint();

  const ModelConfig& config() const noexcept { return config_; }
  const MappedWeights& weights() const noexcept { return weights_; }
  std::uint64_t payload_bytes() const noexcept { return payload_bytes_; }
  bool explicit_untied_marker() const noexcept { return explicit_untied_; }
  bool zero_copy() const noexcept { return arena_.empty(); }
  // Non-fatal findings, e.g. the header sign marker disagreeing with the size.
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  friend Checkpoint map_checkpoint(const std::filesystem::path&, const LoadOptions&);
  void release() noexcept;

  ModelConfig config_{};
  MappedWeights weights_{};
  std::uint64_t payload_bytes_ = 0;
  bool explicit_untied_ = false;
  std::vector<std::string> warnings_;
  void* map_base_ = nullptr;
  std::size_t map_length_ = 0;
  AlignedBuffer<float> arena_;
};

Checkpoint map_checkpoint(const std::filesystem::path& path, const LoadOptions& options = {});

}  // namespace corellm
