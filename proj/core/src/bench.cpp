#include "corellm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "corellm/error.hpp"

namespace corellm {

std::int64_t percentile(std::span<const std::int64_t> latencies, double q) {
  if (latencies.empty()) throw Error(ErrorCode::kEmptyInput, "percentile of an empty series");
  if (!(q >= 0.0 && q <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percentile must lie in [0, 100]");
  }
  std::vector<std::int64_t> sorted(latencies.begin(), latencies.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<std::int64_t>(sorted.size());
  const auto rank = static_cast<std::int64_t>(std::ceil(q / 100.0 * static_cast<double>(n))) - 1;
  return sorted[static_cast<std::size_t>(std::clamp<std::int64_t>(rank, 0, n - 1))];
}

void summarize(BenchReport& report) {
  const auto& lat = report.latencies_us;
  if (lat.empty()) throw Error(ErrorCode::kEmptyInput, "no latency samples");
  report.first_token_us = lat.front();
  report.p50_us = percentile(lat, 50.0);
  report.p99_us = percentile(lat, 99.0);
  if (lat.size() == 1) {
    report.tokens_per_second = 1e6 / static_cast<double>(lat.front());
    return;
  }
  const std::int64_t steady = std::accumulate(lat.begin() + 1, lat.end(), std::int64_t{0});
  report.tokens_per_second = static_cast<double>(lat.size() - 1) / (static_cast<double>(steady) * 1e-6);
}

double roofline_max_flops(const RooflineInput& in) {
  if (!(in.operational_intensity > 0.0 && in.bandwidth > 0.0 && in.arithmetic_peak > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "roofline inputs must be positive");
  }
  return std::min(in.arithmetic_peak, in.operational_intensity * in.bandwidth);
}

GemvIntensity gemv_intensity(std::int64_t rows, std::int64_t cols) {
  if (rows <= 0 || cols <= 0) throw Error(ErrorCode::kInvalidArgument, "GEMV dims must be positive");
  const double weights = static_cast<double>(rows) * static_cast<double>(cols);
  const double flops = 2.0 * weights;
  return {flops / weights, flops / (4.0 * weights)};
}

double energy_per_token(const EnergyInput& in) {
  if (!(in.p_avg_watts > 0.0 && in.tokens_per_second > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "power and throughput must be positive");
  }
  return 1000.0 * in.p_avg_watts / in.tokens_per_second;
}

void write_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kWrite, path.string() + ": cannot open for writing");
  out << "token_index,latency_us\n";
  for (std::size_t i = 0; i < report.latencies_us.size(); ++i) {
    out << i << ',' << report.latencies_us[i] << '\n';
  }
  out.flush();
  if (!out) throw Error(ErrorCode::kWrite, path.string() + ": write failed");
}

std::vector<std::int64_t> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kOpen, path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "token_index,latency_us") {
    throw Error(ErrorCode::kFormat, path.string() + ":1: expected header token_index,latency_us");
  }
  std::vector<std::int64_t> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::int64_t index = 0;
    std::int64_t latency = 0;
    char comma = 0;
    if (!(row >> index >> comma >> latency) || comma != ',' ||
        index != static_cast<std::int64_t>(out.size()) || !row.eof()) {
      throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": bad row");
    }
    out.push_back(latency);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_us(Clock::time_point start, Clock::time_point end) {
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(end - start).count();
  return std::max<std::int64_t>(1, (ns + 999) / 1000);
}

}  // namespace

GenerationResult generate(TransformerSession& session, const TokenizerModel& tokenizer,
                          Sampler& sampler, std::string_view prompt, int steps,
                          std::ostream* stream) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be at least 1");
  const ModelConfig& cfg = session.config();
  if (tokenizer.size() != static_cast<std::size_t>(cfg.vocab_size)) {
    throw Error(ErrorCode::kInvalidArgument, "tokenizer and model disagree on vocab size");
  }

  GenerationResult result;
  const std::vector<int> prompt_tokens = tokenizer.encode(prompt, true);
  const auto prompt_len = static_cast<std::int64_t>(prompt_tokens.size());
  // Positions used: the prompt (BOS included) plus every generated token but
  // the last, which is never fed back.
  if (prompt_len - 1 + steps > cfg.seq_len) {
    throw Error(ErrorCode::kSequenceOverflow,
                std::to_string(steps) + " steps after a " + std::to_string(prompt_len - 1) +
                    "-token prompt exceed the context of " + std::to_string(cfg.seq_len));
  }

  result.report.latencies_us.reserve(static_cast<std::size_t>(steps));
  result.tokens.reserve(static_cast<std::size_t>(steps));
  result.text.reserve(static_cast<std::size_t>(steps) *
                      static_cast<std::size_t>(std::max(tokenizer.max_token_length(), 1)));

  int pos = 0;
  auto start = Clock::now();
  for (; pos < prompt_len - 1; ++pos) session.forward(prompt_tokens[static_cast<std::size_t>(pos)], pos);
  int token = prompt_tokens.back();

  for (int i = 0; i < steps; ++i, ++pos) {
    if (i > 0) start = Clock::now();
    const std::span<const float> logits = session.forward(token, pos);
    const int next = sampler.sample(logits);
    const auto end = Clock::now();
    result.report.latencies_us.push_back(elapsed_us(start, end));

    const std::string_view piece = tokenizer.decode(token, next);
    result.text.append(piece);
    result.tokens.push_back(next);
    if (stream != nullptr) {
      stream->write(piece.data(), static_cast<std::streamsize>(piece.size()));
      stream->flush();
    }
    token = next;
  }
  summarize(result.report);
  return result;
}

GenerationResult run_generation(const std::filesystem::path& model_path,
                                const std::filesystem::path& tokenizer_path,
                                const GenerationOptions& options, std::ostream* stream) {
  const auto load_start = Clock::now();
  const Checkpoint checkpoint = map_checkpoint(model_path, options.load);
  const TokenizerModel tokenizer = load_tokenizer(tokenizer_path, checkpoint.config().vocab_size);
  TransformerSession session(checkpoint.config(), checkpoint.weights(), options.variant);
  Sampler sampler(checkpoint.config().vocab_size, options.sampler);
  const auto load_end = Clock::now();

  GenerationResult result = generate(session, tokenizer, sampler, options.prompt, options.steps, stream);
  result.report.load_ms =
      std::chrono::duration<double, std::milli>(load_end - load_start).count();
  result.alignment = audit_alignment(checkpoint.weights(), checkpoint.config());
  result.warnings = checkpoint.warnings();
  return result;
}

}  // namespace corellm
