#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corellm/kernels.hpp"
#include "corellm/model_format.hpp"
#include "corellm/sampler.hpp"
#include "corellm/tokenizer.hpp"
#include "corellm/transformer.hpp"

namespace corellm {

struct BenchReport {
  // One entry per generated token, integer microseconds. Entry 0 includes the
  // prompt prefill.
  std::vector<std::int64_t> latencies_us;
  double tokens_per_second = 0.0;
  std::int64_t p50_us = 0;
  std::int64_t p99_us = 0;
  std::int64_t first_token_us = 0;
  double load_ms = 0.0;
};

// Fills tokens_per_second, p50, p99 and first_token from latencies_us.
// Steady-state throughput skips the first token; with a single token it is
// 1 / latency. Throws kEmptyInput.
void summarize(BenchReport& report);

// Nearest rank on the ascending series: element ceil(q/100 * N) - 1, clamped.
// Throws kEmptyInput, or kInvalidArgument when q is outside [0, 100].
std::int64_t percentile(std::span<const std::int64_t> latencies, double q);

struct RooflineInput {
  double operational_intensity = 0.0;  // FLOPs / byte
  double bandwidth = 0.0;              // bytes / s
  double arithmetic_peak = 0.0;        // FLOPs / s
};

// min(peak, intensity * bandwidth). Throws kInvalidArgument on nonpositive input.
double roofline_max_flops(const RooflineInput& input);

struct GemvIntensity {
  double per_element = 0.0;  // one byte counted per weight: 2.0
  double fp32_bytes = 0.0;   // four bytes per weight: 0.5
};

// Arithmetic intensity of a rows x cols GEMV against its weight traffic.
GemvIntensity gemv_intensity(std::int64_t rows, std::int64_t cols);

struct EnergyInput {
  double p_avg_watts = 0.0;
  double tokens_per_second = 0.0;
};

// Millijoules per token: 1000 * P / TPS.
double energy_per_token(const EnergyInput& input);

// "token_index,latency_us" header, one LF-terminated row per token.
void write_csv(const BenchReport& report, const std::filesystem::path& path);
std::vector<std::int64_t> read_csv(const std::filesystem::path& path);

struct GenerationResult {
  std::string text;
  std::vector<int> tokens;
  BenchReport report;
  // Filled by run_generation only.
  AlignmentReport alignment;
  std::vector<std::string> warnings;
};

// Encodes prompt (with BOS), prefills it, then generates `steps` tokens. Each
// latency sample covers forward() plus sampling; writing pieces to `stream`
// happens outside the timed region. Throws kSequenceOverflow before running
// when 1 + prompt tokens + steps - 1 exceeds seq_len.
GenerationResult generate(TransformerSession& session, const TokenizerModel& tokenizer,
                          Sampler& sampler, std::string_view prompt, int steps,
                          std::ostream* stream);

struct GenerationOptions {
  std::string prompt;
  int steps = 256;
  SamplerConfig sampler{};
  KernelVariant variant = KernelVariant::kVectorized;
  LoadOptions load{};
};

// Loads model and tokenizer (timed into report.load_ms), then generate().
GenerationResult run_generation(const std::filesystem::path& model_path,
                                const std::filesystem::path& tokenizer_path,
                                const GenerationOptions& options, std::ostream* stream);

}  // namespace corellm
