#pragma once

// Test-only writers for checkpoint and tokenizer files. Nothing here calls
// into the library, so the files double as independent oracles for the
// loader: offsets and sizes are tallied from first principles.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace corellm::testing {

struct FixtureDims {
  std::int32_t dim = 8;
  std::int32_t hidden_dim = 16;
  std::int32_t n_layers = 1;
  std::int32_t n_heads = 2;
  std::int32_t n_kv_heads = 2;
  std::int32_t vocab_size = 16;
  std::int32_t seq_len = 4;
};

enum class Fill { kRandom, kZero };

struct FixtureSpec {
  FixtureDims dims;
  bool tied = true;
  // Store vocab_size negated in the header (the untied marker).
  bool negative_vocab = false;
  Fill fill = Fill::kRandom;
  std::uint64_t seed = 1;
  // Matrix entries uniform in [-scale, scale]; norm weights in [0.5, 1.5].
  float scale = 0.5f;
  // Bytes removed from (negative) or appended to (positive) the payload.
  std::int64_t size_adjust = 0;
};

struct TensorRecord {
  std::string name;
  std::uint64_t elements = 0;
  std::uint64_t file_offset = 0;
};

struct FixtureFile {
  std::filesystem::path path;
  std::vector<TensorRecord> tensors;  // on-disk order, legacy table included
  std::vector<float> values;          // every payload scalar in file order
  std::uint64_t payload_bytes = 0;
};

// 28 header bytes for the given fields, little-endian.
std::vector<unsigned char> pack_header(const FixtureDims& dims, std::int32_t stored_vocab);

FixtureFile write_checkpoint(const std::filesystem::path& path, const FixtureSpec& spec);

// tokenizer.bin layout: u32 max_len, then (f32 score, i32 len, bytes) records.
void write_tokenizer(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, float>>& entries,
                     std::int32_t max_token_length = -1);

// Closed vocabulary for end-to-end runs: "<unk>", "<s>", "</s>", the 256
// byte tokens "<0xNN>", then the given pieces.
std::vector<std::pair<std::string, float>> byte_fallback_vocab(
    const std::vector<std::pair<std::string, float>>& extra);

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// splitmix64; test data must not depend on <random> distributions.
class TestRng {
 public:
  explicit TestRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [lo, hi).
  float uniform(float lo, float hi);
  int uniform_int(int lo, int hi);  // inclusive

 private:
  std::uint64_t state_;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);

}  // namespace corellm::testing
