// bench: generate text from a llama2-format checkpoint and report per-token
// latency, throughput, and optional roofline/energy figures.
//
//   bench model.bin tokenizer.bin -n 256 --mode bench --csv benchmark_results.csv

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "corellm/bench.hpp"
#include "corellm/error.hpp"

namespace {

struct RooflineFlag {
  double bandwidth_gbs = 0.0;
  double peak_gflops = 0.0;
};

RooflineFlag parse_roofline(const std::string& text) {
  RooflineFlag r;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> r.bandwidth_gbs >> comma >> r.peak_gflops) || comma != ',' || !in.eof()) {
    throw corellm::Error(corellm::ErrorCode::kInvalidArgument,
                         "--roofline expects <bandwidth_GBs>,<peak_GFLOPS>, got '" + text + "'");
  }
  return r;
}

void print_report(const corellm::GenerationResult& result, const corellm::GenerationOptions& opts,
                  std::optional<double> power, std::optional<RooflineFlag> roofline) {
  const corellm::BenchReport& report = result.report;
  const double jitter = report.p50_us > 0 ? static_cast<double>(report.p99_us) / report.p50_us : 0.0;
  std::fprintf(stderr, "\n");
  std::fprintf(stderr, "kernel          %s\n", corellm::to_string(opts.variant));
  std::fprintf(stderr, "weights         %s\n", opts.load.aligned_copy ? "aligned copy" : "zero-copy mapping");
  if (!result.alignment.entries.empty()) {
    std::fprintf(stderr, "alignment       %s (first tensor at offset %llu, residue %u)\n",
                 result.alignment.all_64_aligned ? "all tensors 64-byte aligned" : "not 64-byte aligned",
                 static_cast<unsigned long long>(result.alignment.entries.front().file_offset),
                 result.alignment.entries.front().residue);
  }
  std::fprintf(stderr, "load            %.3f ms\n", report.load_ms);
  std::fprintf(stderr, "tokens          %zu\n", report.latencies_us.size());
  std::fprintf(stderr, "first token     %lld us\n", static_cast<long long>(report.first_token_us));
  std::fprintf(stderr, "throughput      %.2f tok/s\n", report.tokens_per_second);
  std::fprintf(stderr, "p50             %lld us\n", static_cast<long long>(report.p50_us));
  std::fprintf(stderr, "p99             %lld us\n", static_cast<long long>(report.p99_us));
  std::fprintf(stderr, "p99/p50         %.3f\n", jitter);

  if (roofline) {
    const corellm::GemvIntensity intensity = corellm::gemv_intensity(1, 1);
    auto roof = [&](double i) {
      return corellm::roofline_max_flops({i, roofline->bandwidth_gbs * 1e9, roofline->peak_gflops * 1e9});
    };
    std::fprintf(stderr, "intensity       %.2f FLOP/B (per element), %.2f FLOP/B (fp32 bytes)\n",
                 intensity.per_element, intensity.fp32_bytes);
    std::fprintf(stderr, "roofline        %.1f GFLOPS (per element), %.1f GFLOPS (fp32 bytes)\n",
                 roof(intensity.per_element) / 1e9, roof(intensity.fp32_bytes) / 1e9);
  }
  if (power) {
    const double mj = corellm::energy_per_token({*power, report.tokens_per_second});
    std::fprintf(stderr, "energy          %.2f mJ/token at %.2f W\n", mj, *power);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-threaded llama2 inference benchmark"};

  std::string model_path;
  std::string tokenizer_path;
  corellm::GenerationOptions opts;
  std::string kernel = "vectorized";
  std::string mode = "generate";
  std::string csv_path;
  std::optional<double> power;
  std::string roofline_text;

  app.add_option("model", model_path, "Checkpoint file")->required();
  app.add_option("tokenizer", tokenizer_path, "Tokenizer file")->required();
  app.add_option("-n", opts.steps, "Tokens to generate")->default_val(256);
  app.add_option("-i", opts.prompt, "Prompt text");
  app.add_option("-t", opts.sampler.temperature, "Temperature (0 = greedy)")->default_val(0.0f);
  app.add_option("-p", opts.sampler.top_p, "Nucleus top-p")->default_val(1.0f);
  app.add_option("-s", opts.sampler.seed, "RNG seed")->default_val(42);
  app.add_option("--kernel", kernel, "scalar|vectorized")
      ->check(CLI::IsMember({"scalar", "vectorized"}))
      ->default_val("vectorized");
  app.add_flag("--aligned-copy", opts.load.aligned_copy, "Copy weights into a 64-byte aligned arena");
  app.add_option("--csv", csv_path, "Latency CSV path (bench mode default: benchmark_results.csv)");
  app.add_option("--mode", mode, "generate|bench")
      ->check(CLI::IsMember({"generate", "bench"}))
      ->default_val("generate");
  app.add_option("--power", power, "Average package power in watts; enables the energy report");
  app.add_option("--roofline", roofline_text, "<bandwidth_GBs>,<peak_GFLOPS>");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    opts.variant = kernel == "scalar" ? corellm::KernelVariant::kScalar
                                      : corellm::KernelVariant::kVectorized;
    std::optional<RooflineFlag> roofline;
    if (!roofline_text.empty()) roofline = parse_roofline(roofline_text);
    if (power && !(*power > 0.0)) {
      throw corellm::Error(corellm::ErrorCode::kInvalidArgument, "--power must be positive");
    }
    if (csv_path.empty() && mode == "bench") csv_path = "benchmark_results.csv";

    const corellm::GenerationResult result =
        corellm::run_generation(model_path, tokenizer_path, opts, &std::cout);
    std::cout << '\n' << std::flush;
    for (const std::string& w : result.warnings) std::fprintf(stderr, "bench: warning: %s\n", w.c_str());

    if (!csv_path.empty()) corellm::write_csv(result.report, csv_path);
    if (mode == "bench" || power || roofline) {
      print_report(result, opts, power, roofline);
    } else {
      std::fprintf(stderr, "achieved tok/s: %f\n", result.report.tokens_per_second);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bench: %s\n", e.what());
    return 1;
  }
  return 0;
}
