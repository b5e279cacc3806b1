#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace corellm {

inline constexpr int kBosToken = 1;
inline constexpr int kByteFallbackOffset = 3;
inline constexpr std::int32_t kMaxPieceBytes = 1024;

// Vocabulary pieces and merge scores.
class TokenizerModel {
 public:
  TokenizerModel() = default;
  TokenizerModel(std::vector<std::string> vocab, std::vector<float> scores,
                 std::int32_t max_token_length);

  std::size_t size() const noexcept { return vocab_.size(); }
  const std::string& piece(int token) const { return vocab_.at(static_cast<std::size_t>(token)); }
  float score(int token) const { return scores_.at(static_cast<std::size_t>(token)); }
  std::int32_t max_token_length() const noexcept { return max_token_length_; }
  std::span<const std::string> vocab() const noexcept { return vocab_; }
  std::span<const float> scores() const noexcept { return scores_; }

  // Index of an exact piece, or -1. Duplicate pieces resolve to the lowest
  // index.
  int lookup(std::string_view piece) const;

  // Byte-pair merge encoding. With add_bos, token 1 is prepended and a space
  // is inserted ahead of non-empty text.
  std::vector<int> encode(std::string_view text, bool add_bos) const;

  // The bytes of one token. Strips the leading space of a piece that follows
  // BOS and maps "<0xNN>" pieces to the raw byte. The returned view stays
  // valid for the lifetime of the model. Throws kIndex.
  std::string_view decode(int prev_token, int token) const;

 private:
  std::vector<std::string> vocab_;
  std::vector<float> scores_;
  std::int32_t max_token_length_ = 0;
  std::unordered_map<std::string_view, int> index_;
  std::array<char, 256> raw_bytes_{};
  // Decoded byte for each "<0xNN>" piece, or -1.
  std::vector<std::int16_t> byte_piece_;

  void build_index();
};

// Reads: int32 max_token_length, then vocab_size records of
// (float32 score, int32 length, length raw bytes), all little-endian.
// Throws kOpen, or kFormat on truncation or a length outside [0, 1024].
TokenizerModel load_tokenizer(const std::filesystem::path& path, int vocab_size);

}  // namespace corellm
