#include "corellm/tokenizer.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "corellm/error.hpp"

namespace corellm {

namespace {

int parse_byte_piece(std::string_view piece) {
  // "<0xNN>" with uppercase or lowercase hex digits.
  if (piece.size() != 6 || piece.substr(0, 3) != "<0x" || piece[5] != '>') return -1;
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  const int hi = hex(piece[3]);
  const int lo = hex(piece[4]);
  if (hi < 0 || lo < 0) return -1;
  return hi * 16 + lo;
}

// Byte length of the UTF-8 sequence starting with lead byte c; stray
// continuation bytes and invalid leads are taken one byte at a time.
std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) return 2;
  if ((c & 0xF0) == 0xE0) return 3;
  if ((c & 0xF8) == 0xF0) return 4;
  return 1;
}

}  // namespace

TokenizerModel::TokenizerModel(std::vector<std::string> vocab, std::vector<float> scores,
                               std::int32_t max_token_length)
    : vocab_(std::move(vocab)), scores_(std::move(scores)), max_token_length_(max_token_length) {
  if (vocab_.size() != scores_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "vocab and scores differ in length");
  }
  build_index();
}

void TokenizerModel::build_index() {
  index_.clear();
  index_.reserve(vocab_.size());
  byte_piece_.assign(vocab_.size(), -1);
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    index_.emplace(std::string_view(vocab_[i]), static_cast<int>(i));
    byte_piece_[i] = static_cast<std::int16_t>(parse_byte_piece(vocab_[i]));
  }
  for (int b = 0; b < 256; ++b) raw_bytes_[static_cast<std::size_t>(b)] = static_cast<char>(b);
}

int TokenizerModel::lookup(std::string_view piece) const {
  const auto it = index_.find(piece);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> TokenizerModel::encode(std::string_view text, bool add_bos) const {
  std::vector<int> tokens;
  tokens.reserve(text.size() + 2);
  if (add_bos) tokens.push_back(kBosToken);

  auto push_bytes = [&](std::string_view chunk) {
    const int id = lookup(chunk);
    if (id >= 0) {
      tokens.push_back(id);
      return;
    }
    for (const char c : chunk) {
      const int fallback = static_cast<unsigned char>(c) + kByteFallbackOffset;
      if (fallback >= static_cast<int>(vocab_.size())) {
        throw Error(ErrorCode::kIndex, "no piece or byte-fallback token for byte " +
                                           std::to_string(static_cast<unsigned char>(c)));
      }
      tokens.push_back(fallback);
    }
  };

  if (add_bos && !text.empty()) push_bytes(" ");

  for (std::size_t i = 0; i < text.size();) {
    std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    len = std::min(len, text.size() - i);
    push_bytes(text.substr(i, len));
    i += len;
  }

  // Greedy merges: best score wins, leftmost on ties.
  std::string scratch;
  scratch.reserve(static_cast<std::size_t>(max_token_length_) * 2 + 2);
  while (true) {
    float best_score = -std::numeric_limits<float>::infinity();
    int best_id = -1;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      scratch.assign(vocab_[static_cast<std::size_t>(tokens[i])]);
      scratch.append(vocab_[static_cast<std::size_t>(tokens[i + 1])]);
      const int id = lookup(scratch);
      if (id >= 0 && (best_id < 0 || scores_[static_cast<std::size_t>(id)] > best_score)) {
        best_score = scores_[static_cast<std::size_t>(id)];
        best_id = id;
        best_idx = i;
      }
    }
    if (best_id < 0) break;
    tokens[best_idx] = best_id;
    tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(best_idx) + 1);
  }
  return tokens;
}

std::string_view TokenizerModel::decode(int prev_token, int token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_.size()) {
    throw Error(ErrorCode::kIndex, "token " + std::to_string(token) + " outside vocabulary of " +
                                       std::to_string(vocab_.size()));
  }
  const auto idx = static_cast<std::size_t>(token);
  if (byte_piece_[idx] >= 0) {
    return {&raw_bytes_[static_cast<std::size_t>(byte_piece_[idx])], 1};
  }
  std::string_view piece = vocab_[idx];
  if (prev_token == kBosToken && !piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
  return piece;
}

TokenizerModel load_tokenizer(const std::filesystem::path& path, int vocab_size) {
  if (vocab_size < 0) throw Error(ErrorCode::kInvalidArgument, "negative vocab size");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kOpen, path.string() + ": cannot open tokenizer");

  auto read_bytes = [&](void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw Error(ErrorCode::kFormat, path.string() + ": truncated while reading " + what);
    }
  };
  auto read_u32 = [&](const char* what) {
    unsigned char b[4];
    read_bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };

  const auto max_len = static_cast<std::int32_t>(read_u32("max_token_length"));
  std::vector<std::string> vocab(static_cast<std::size_t>(vocab_size));
  std::vector<float> scores(static_cast<std::size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) {
    const std::uint32_t score_bits = read_u32("score");
    float score = 0.0f;
    std::memcpy(&score, &score_bits, sizeof(score));
    scores[static_cast<std::size_t>(i)] = score;
    const auto len = static_cast<std::int32_t>(read_u32("piece length"));
    if (len < 0 || len > kMaxPieceBytes) {
      throw Error(ErrorCode::kFormat, path.string() + ": piece " + std::to_string(i) +
                                          " has invalid length " + std::to_string(len));
    }
    std::string& piece = vocab[static_cast<std::size_t>(i)];
    piece.resize(static_cast<std::size_t>(len));
    if (len > 0) read_bytes(piece.data(), piece.size(), "piece bytes");
  }
  return TokenizerModel(std::move(vocab), std::move(scores), max_len);
}

}  // namespace corellm
