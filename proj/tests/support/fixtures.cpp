#include "fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace corellm::testing {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<unsigned char>& out, float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

}  // namespace

std::uint64_t TestRng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

float TestRng::uniform(float lo, float hi) {
  const double unit = static_cast<double>(next() >> 11) * 0x1.0p-53;
  return static_cast<float>(lo + (hi - lo) * unit);
}

int TestRng::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(next() % span);
}

std::vector<unsigned char> pack_header(const FixtureDims& d, std::int32_t stored_vocab) {
  std::vector<unsigned char> out;
  for (std::int32_t v : {d.dim, d.hidden_dim, d.n_layers, d.n_heads, d.n_kv_heads, stored_vocab,
                         d.seq_len}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  return out;
}

FixtureFile write_checkpoint(const std::filesystem::path& path, const FixtureSpec& spec) {
  const FixtureDims& d = spec.dims;
  const std::uint64_t dim = static_cast<std::uint64_t>(d.dim);
  const std::uint64_t hidden = static_cast<std::uint64_t>(d.hidden_dim);
  const std::uint64_t layers = static_cast<std::uint64_t>(d.n_layers);
  const std::uint64_t vocab = static_cast<std::uint64_t>(d.vocab_size);
  const std::uint64_t seq = static_cast<std::uint64_t>(d.seq_len);
  const std::uint64_t head = dim / static_cast<std::uint64_t>(d.n_heads);
  const std::uint64_t kv = dim * static_cast<std::uint64_t>(d.n_kv_heads) /
                           static_cast<std::uint64_t>(d.n_heads);

  struct Block {
    std::string name;
    std::uint64_t elements;
    bool norm;
  };
  std::vector<Block> blocks;
  blocks.push_back({"token_embedding_table", vocab * dim, false});
  const std::pair<const char*, std::uint64_t> per_layer[] = {
      {"rms_att_weight", dim}, {"wq", dim * dim},     {"wk", kv * dim},
      {"wv", kv * dim},        {"wo", dim * dim},     {"rms_ffn_weight", dim},
      {"w1", hidden * dim},    {"w2", dim * hidden},  {"w3", hidden * dim},
  };
  for (const auto& [name, count] : per_layer) {
    const bool norm = std::string(name).rfind("rms", 0) == 0;
    for (std::uint64_t l = 0; l < layers; ++l) {
      blocks.push_back({"layers." + std::to_string(l) + "." + name, count, norm});
    }
  }
  blocks.push_back({"rms_final_weight", dim, true});
  blocks.push_back({"freq_cis_real", seq * head / 2, false});
  blocks.push_back({"freq_cis_imag", seq * head / 2, false});
  if (!spec.tied) blocks.push_back({"wcls", vocab * dim, false});

  FixtureFile file;
  file.path = path;
  TestRng rng(spec.seed);
  std::uint64_t offset = 28;
  for (const Block& b : blocks) {
    file.tensors.push_back({b.name, b.elements, offset});
    offset += 4 * b.elements;
    for (std::uint64_t i = 0; i < b.elements; ++i) {
      float v = 0.0f;
      if (spec.fill == Fill::kRandom) {
        v = b.norm ? rng.uniform(0.5f, 1.5f) : rng.uniform(-spec.scale, spec.scale);
      }
      file.values.push_back(v);
    }
  }

  const std::int32_t stored_vocab = spec.negative_vocab ? -d.vocab_size : d.vocab_size;
  std::vector<unsigned char> bytes = pack_header(d, stored_vocab);
  for (const float v : file.values) put_f32(bytes, v);
  if (spec.size_adjust < 0) {
    bytes.resize(bytes.size() - static_cast<std::size_t>(-spec.size_adjust));
  } else {
    bytes.resize(bytes.size() + static_cast<std::size_t>(spec.size_adjust), 0);
  }
  file.payload_bytes = bytes.size() - 28;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write fixture " + path.string());
  return file;
}

void write_tokenizer(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, float>>& entries,
                     std::int32_t max_token_length) {
  if (max_token_length < 0) {
    max_token_length = 0;
    for (const auto& [piece, score] : entries) {
      max_token_length = std::max(max_token_length, static_cast<std::int32_t>(piece.size()));
    }
  }
  std::vector<unsigned char> bytes;
  put_u32(bytes, static_cast<std::uint32_t>(max_token_length));
  for (const auto& [piece, score] : entries) {
    put_f32(bytes, score);
    put_u32(bytes, static_cast<std::uint32_t>(piece.size()));
    bytes.insert(bytes.end(), piece.begin(), piece.end());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write fixture " + path.string());
}

std::vector<std::pair<std::string, float>> byte_fallback_vocab(
    const std::vector<std::pair<std::string, float>>& extra) {
  std::vector<std::pair<std::string, float>> v = {{"<unk>", 0.0f}, {"\n<s>\n", 0.0f}, {"\n</s>\n", 0.0f}};
  static const char* kHex = "0123456789ABCDEF";
  for (int b = 0; b < 256; ++b) {
    v.push_back({std::string("<0x") + kHex[b >> 4] + kHex[b & 15] + ">", 0.0f});
  }
  v.insert(v.end(), extra.begin(), extra.end());
  return v;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("corellm-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace corellm::testing
