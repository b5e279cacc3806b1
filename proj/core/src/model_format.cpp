#include "corellm/model_format.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <limits>
#include <new>
#include <utility>

#include "corellm/error.hpp"

namespace corellm {

namespace {

std::int32_t read_i32_le(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(bytes[offset + i])) << (8 * i);
  }
  return static_cast<std::int32_t>(v);
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) {
    throw Error(ErrorCode::kOverflow, "checkpoint size does not fit in 64 bits");
  }
  return r;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) {
    throw Error(ErrorCode::kOverflow, "checkpoint size does not fit in 64 bits");
  }
  return r;
}

// Scalar counts of the tied layout, excluding wcls.
std::uint64_t tied_scalar_count(const ModelConfig& c) {
  const std::uint64_t dim = static_cast<std::uint64_t>(c.dim);
  const std::uint64_t hidden = static_cast<std::uint64_t>(c.hidden_dim);
  const std::uint64_t layers = static_cast<std::uint64_t>(c.n_layers);
  const std::uint64_t kv_dim = static_cast<std::uint64_t>(c.kv_dim());
  const std::uint64_t vocab = static_cast<std::uint64_t>(c.vocab_size);
  const std::uint64_t seq = static_cast<std::uint64_t>(c.seq_len);
  const std::uint64_t half_head = static_cast<std::uint64_t>(c.head_size() / 2);

  const std::uint64_t dim_sq = checked_mul(dim, dim);
  std::uint64_t per_layer = 0;
  per_layer = checked_add(per_layer, dim);                                 // rms_att_weight
  per_layer = checked_add(per_layer, dim_sq);                              // wq
  per_layer = checked_add(per_layer, checked_mul(2, checked_mul(kv_dim, dim)));  // wk, wv
  per_layer = checked_add(per_layer, dim_sq);                              // wo
  per_layer = checked_add(per_layer, dim);                                 // rms_ffn_weight
  per_layer = checked_add(per_layer, checked_mul(3, checked_mul(hidden, dim)));  // w1, w2, w3

  std::uint64_t total = checked_mul(vocab, dim);  // token_embedding_table
  total = checked_add(total, checked_mul(layers, per_layer));
  total = checked_add(total, dim);  // rms_final_weight
  total = checked_add(total, checked_mul(2, checked_mul(seq, half_head)));  // legacy rope table
  return total;
}

std::uint64_t legacy_table_scalars(const ModelConfig& c) {
  return 2ULL * static_cast<std::uint64_t>(c.seq_len) * static_cast<std::uint64_t>(c.head_size() / 2);
}

std::string layer_name(std::size_t layer, std::string_view field) {
  return "layers." + std::to_string(layer) + "." + std::string(field);
}

// Cuts the payload into views in on-disk order.
class PayloadCursor {
 public:
  explicit PayloadCursor(const float* base) : cursor_(base) {}
  std::span<const float> take(std::uint64_t count) {
    std::span<const float> view(cursor_, static_cast<std::size_t>(count));
    cursor_ += count;
    return view;
  }
  void skip(std::uint64_t count) { cursor_ += count; }

 private:
  const float* cursor_;
};

MappedWeights slice_weights(const ModelConfig& c, const float* payload, bool tied) {
  const std::uint64_t dim = static_cast<std::uint64_t>(c.dim);
  const std::uint64_t hidden = static_cast<std::uint64_t>(c.hidden_dim);
  const std::uint64_t kv_dim = static_cast<std::uint64_t>(c.kv_dim());
  const std::size_t layers = static_cast<std::size_t>(c.n_layers);

  MappedWeights w;
  w.layers.resize(layers);
  PayloadCursor cur(payload);
  w.token_embedding_table = cur.take(static_cast<std::uint64_t>(c.vocab_size) * dim);
  for (auto& l : w.layers) l.rms_att_weight = cur.take(dim);
  for (auto& l : w.layers) l.wq = cur.take(dim * dim);
  for (auto& l : w.layers) l.wk = cur.take(kv_dim * dim);
  for (auto& l : w.layers) l.wv = cur.take(kv_dim * dim);
  for (auto& l : w.layers) l.wo = cur.take(dim * dim);
  for (auto& l : w.layers) l.rms_ffn_weight = cur.take(dim);
  for (auto& l : w.layers) l.w1 = cur.take(hidden * dim);
  for (auto& l : w.layers) l.w2 = cur.take(dim * hidden);
  for (auto& l : w.layers) l.w3 = cur.take(hidden * dim);
  w.rms_final_weight = cur.take(dim);
  cur.skip(legacy_table_scalars(c));
  w.tied = tied;
  w.wcls = tied ? w.token_embedding_table : cur.take(static_cast<std::uint64_t>(c.vocab_size) * dim);
  return w;
}

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

}  // namespace

void validate_config(const ModelConfig& c) {
  const std::pair<const char*, std::int32_t> fields[] = {
      {"dim", c.dim},           {"hidden_dim", c.hidden_dim}, {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},   {"n_kv_heads", c.n_kv_heads}, {"vocab_size", c.vocab_size},
      {"seq_len", c.seq_len},
  };
  for (const auto& [name, value] : fields) {
    if (value <= 0) {
      throw Error(ErrorCode::kInvalidConfig,
                  std::string(name) + " must be positive, got " + std::to_string(value));
    }
  }
  if (c.dim % c.n_heads != 0) {
    throw Error(ErrorCode::kInvalidConfig, "dim is not divisible by n_heads");
  }
  if (c.n_heads % c.n_kv_heads != 0) {
    throw Error(ErrorCode::kInvalidConfig, "n_heads is not divisible by n_kv_heads");
  }
  if (c.head_size() % 2 != 0) {
    throw Error(ErrorCode::kInvalidConfig, "head_size must be even for rotary embeddings");
  }
}

ParsedHeader parse_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::kFormat, "checkpoint header needs 28 bytes, got " +
                                        std::to_string(bytes.size()));
  }
  ParsedHeader h;
  h.config.dim = read_i32_le(bytes, 0);
  h.config.hidden_dim = read_i32_le(bytes, 4);
  h.config.n_layers = read_i32_le(bytes, 8);
  h.config.n_heads = read_i32_le(bytes, 12);
  h.config.n_kv_heads = read_i32_le(bytes, 16);
  const std::int32_t stored_vocab = read_i32_le(bytes, 20);
  h.config.seq_len = read_i32_le(bytes, 24);

  if (stored_vocab == std::numeric_limits<std::int32_t>::min()) {
    throw Error(ErrorCode::kInvalidConfig, "vocab_size out of range");
  }
  h.explicit_untied = stored_vocab < 0;
  h.config.vocab_size = stored_vocab < 0 ? -stored_vocab : stored_vocab;
  validate_config(h.config);
  return h;
}

std::uint64_t tied_payload_size(const ModelConfig& config) {
  validate_config(config);
  return checked_mul(4, tied_scalar_count(config));
}

std::uint64_t expected_payload_size(const ModelConfig& config) {
  validate_config(config);
  const std::uint64_t wcls = checked_mul(static_cast<std::uint64_t>(config.vocab_size),
                                         static_cast<std::uint64_t>(config.dim));
  return checked_mul(4, checked_add(tied_scalar_count(config), wcls));
}

void MappedWeights::for_each_tensor(
    const std::function<void(std::string_view, std::span<const float>)>& fn) const {
  fn("token_embedding_table", token_embedding_table);
  const std::pair<const char*, std::span<const float> LayerWeights::*> fields[] = {
      {"rms_att_weight", &LayerWeights::rms_att_weight},
      {"wq", &LayerWeights::wq},
      {"wk", &LayerWeights::wk},
      {"wv", &LayerWeights::wv},
      {"wo", &LayerWeights::wo},
      {"rms_ffn_weight", &LayerWeights::rms_ffn_weight},
      {"w1", &LayerWeights::w1},
      {"w2", &LayerWeights::w2},
      {"w3", &LayerWeights::w3},
  };
  for (const auto& [name, member] : fields) {
    for (std::size_t l = 0; l < layers.size(); ++l) fn(layer_name(l, name), layers[l].*member);
  }
  fn("rms_final_weight", rms_final_weight);
  fn("wcls", wcls);
}

AlignmentReport audit_alignment(const MappedWeights& weights, const ModelConfig& config,
                                std::size_t header_len) {
  AlignmentReport report;
  report.all_64_aligned = true;
  std::uint64_t offset = header_len;
  weights.for_each_tensor([&](std::string_view name, std::span<const float> view) {
    AlignmentEntry e;
    e.name = std::string(name);
    if (name == "wcls") {
      offset += 4 * legacy_table_scalars(config);
      e.file_offset = weights.tied ? header_len : offset;
    } else {
      e.file_offset = offset;
      offset += 4 * static_cast<std::uint64_t>(view.size());
    }
    e.residue = static_cast<std::uint32_t>(reinterpret_cast<std::uintptr_t>(view.data()) %
                                           kCacheLine);
    if (e.residue != 0) report.all_64_aligned = false;
    report.entries.push_back(std::move(e));
  });
  return report;
}

Checkpoint::Checkpoint(Checkpoint&& other) noexcept
    : config_(other.config_),
      weights_(std::move(other.weights_)),
      payload_bytes_(other.payload_bytes_),
      explicit_untied_(other.explicit_untied_),
      warnings_(std::move(other.warnings_)),
      map_base_(std::exchange(other.map_base_, nullptr)),
      map_length_(std::exchange(other.map_length_, 0)),
      arena_(std::move(other.arena_)) {}

Checkpoint& Checkpoint::operator=(Checkpoint&& other) noexcept {
  if (this != &other) {
    release();
    config_ = other.config_;
    weights_ = std::move(other.weights_);
    payload_bytes_ = other.payload_bytes_;
    explicit_untied_ = other.explicit_untied_;
    warnings_ = std::move(other.warnings_);
    map_base_ = std::exchange(other.map_base_, nullptr);
    map_length_ = std::exchange(other.map_length_, 0);
    arena_ = std::move(other.arena_);
  }
  return *this;
}

Checkpoint::~Checkpoint() { release(); }

void Checkpoint::release() noexcept {
  // wcls may alias the embedding table; only the mapping itself is owned.
  if (map_base_ != nullptr) {
    ::munmap(map_base_, map_length_);
    map_base_ = nullptr;
    map_length_ = 0;
  }
}

Checkpoint map_checkpoint(const std::filesystem::path& path, const LoadOptions& options) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) {
    throw Error(ErrorCode::kOpen, path.string() + ": " + std::strerror(errno));
  }
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(ErrorCode::kOpen, path.string() + ": " + std::strerror(err));
  }
  const auto file_size = static_cast<std::uint64_t>(st.st_size);
  if (file_size < kHeaderBytes) {
    ::close(fd);
    throw Error(ErrorCode::kTruncated, path.string() + " is shorter than the 28-byte header");
  }

  void* base = ::mmap(nullptr, static_cast<std::size_t>(file_size), PROT_READ, MAP_PRIVATE, fd, 0);
  const int map_err = errno;
  ::close(fd);
  if (base == MAP_FAILED) {
    throw Error(ErrorCode::kOpen, path.string() + ": mmap failed: " + std::strerror(map_err));
  }

  Checkpoint ckpt;
  ckpt.map_base_ = base;
  ckpt.map_length_ = static_cast<std::size_t>(file_size);

  const auto* bytes = static_cast<const std::byte*>(base);
  const ParsedHeader header = parse_header({bytes, kHeaderBytes});
  ckpt.config_ = header.config;
  ckpt.explicit_untied_ = header.explicit_untied;
  ckpt.payload_bytes_ = file_size - kHeaderBytes;

  const std::uint64_t tied_size = tied_payload_size(header.config);
  const std::uint64_t untied_size = expected_payload_size(header.config);
  bool tied = false;
  if (ckpt.payload_bytes_ < tied_size) {
    throw Error(ErrorCode::kTruncated,
                path.string() + ": payload is " + std::to_string(ckpt.payload_bytes_) +
                    " bytes, smallest valid layout needs " + std::to_string(tied_size));
  } else if (ckpt.payload_bytes_ == tied_size) {
    tied = true;
  } else if (ckpt.payload_bytes_ == untied_size) {
    tied = false;
  } else {
    throw Error(ErrorCode::kSizeMismatch,
                path.string() + ": payload is " + std::to_string(ckpt.payload_bytes_) +
                    " bytes, expected " + std::to_string(tied_size) + " (tied) or " +
                    std::to_string(untied_size) + " (untied)");
  }
  if (tied && header.explicit_untied) {
    ckpt.warnings_.push_back(
        "header marks an untied classifier but the payload size matches the tied layout; using tied");
  } else if (!tied && !header.explicit_untied) {
    ckpt.warnings_.push_back(
        "header marks a tied classifier but the payload size matches the untied layout; using untied");
  }

  const auto* payload = reinterpret_cast<const float*>(bytes + kHeaderBytes);
  MappedWeights mapped = slice_weights(header.config, payload, tied);

  const bool must_swap = std::endian::native == std::endian::big;
  if (!options.aligned_copy && !must_swap) {
    ckpt.weights_ = std::move(mapped);
    return ckpt;
  }

  // Arena copy: each tensor starts on its own cache line.
  constexpr std::size_t kLineFloats = kCacheLine / sizeof(float);
  auto padded = [](std::size_t n) { return (n + kLineFloats - 1) / kLineFloats * kLineFloats; };
  std::size_t arena_floats = 0;
  mapped.for_each_tensor([&](std::string_view name, std::span<const float> view) {
    if (name == "wcls" && tied) return;
    arena_floats += padded(view.size());
  });
  try {
    ckpt.arena_ = AlignedBuffer<float>(arena_floats);
  } catch (const std::bad_alloc&) {
    throw Error(ErrorCode::kResource, "cannot allocate " + std::to_string(arena_floats * 4) +
                                          " bytes for the aligned weight arena");
  }

  float* dst = ckpt.arena_.data();
  auto copy = [&](std::span<const float> src) -> std::span<const float> {
    std::memcpy(dst, src.data(), src.size_bytes());
    if (must_swap) {
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(dst[i])));
      }
    }
    std::span<const float> out(dst, src.size());
    dst += padded(src.size());
    return out;
  };

  MappedWeights aligned;
  aligned.tied = tied;
  aligned.layers.resize(mapped.layers.size());
  aligned.token_embedding_table = copy(mapped.token_embedding_table);
  for (std::size_t l = 0; l < mapped.layers.size(); ++l) {
    const LayerWeights& src = mapped.layers[l];
    LayerWeights& d = aligned.layers[l];
    d.rms_att_weight = copy(src.rms_att_weight);
    d.wq = copy(src.wq);
    d.wk = copy(src.wk);
    d.wv = copy(src.wv);
    d.wo = copy(src.wo);
    d.rms_ffn_weight = copy(src.rms_ffn_weight);
    d.w1 = copy(src.w1);
    d.w2 = copy(src.w2);
    d.w3 = copy(src.w3);
  }
  aligned.rms_final_weight = copy(mapped.rms_final_weight);
  aligned.wcls = tied ? aligned.token_embedding_table : copy(mapped.wcls);
  ckpt.weights_ = std::move(aligned);
  ckpt.release();
  return ckpt;
}

}  // namespace corellm
