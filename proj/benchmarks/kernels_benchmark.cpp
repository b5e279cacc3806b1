#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "corellm/kernels.hpp"
#include "corellm/transformer.hpp"

namespace {

using corellm::KernelVariant;

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& f : v) f = dist(gen);
  return v;
}

KernelVariant variant_of(const benchmark::State& state) {
  return state.range(1) == 0 ? KernelVariant::kScalar : KernelVariant::kVectorized;
}

void BM_Gemv(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = random_vec(n * n, 1);
  const auto x = random_vec(n, 2);
  std::vector<float> out(n);
  const KernelVariant v = variant_of(state);
  for (auto _ : state) {
    corellm::kernels::gemv(out, w, x, v);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * n * n * sizeof(float)));
  state.SetLabel(corellm::to_string(v));
}
BENCHMARK(BM_Gemv)->ArgsProduct({{288, 768, 2048}, {0, 1}});

void BM_Rmsnorm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n, 3);
  const auto w = random_vec(n, 4);
  std::vector<float> out(n);
  const KernelVariant v = variant_of(state);
  for (auto _ : state) {
    corellm::kernels::rmsnorm(out, x, w, v);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetLabel(corellm::to_string(v));
}
BENCHMARK(BM_Rmsnorm)->ArgsProduct({{288, 768}, {0, 1}});

void BM_Softmax(benchmark::State& state) {
  const auto base = random_vec(static_cast<std::size_t>(state.range(0)), 5);
  std::vector<float> x = base;
  const KernelVariant v = variant_of(state);
  for (auto _ : state) {
    x = base;
    corellm::kernels::softmax_inplace(x, v);
    benchmark::DoNotOptimize(x.data());
  }
  state.SetLabel(corellm::to_string(v));
}
BENCHMARK(BM_Softmax)->ArgsProduct({{256, 32000}, {0, 1}});

// One decoder step of a synthetic stories15M-shaped model held in memory.
void BM_Forward(benchmark::State& state) {
  const corellm::ModelConfig c{288, 768, 6, 6, 6, 32000, 256};
  const auto dim = static_cast<std::size_t>(c.dim);
  const auto hidden = static_cast<std::size_t>(c.hidden_dim);
  const auto layers = static_cast<std::size_t>(c.n_layers);
  const std::size_t per_layer = 2 * dim + 4 * dim * dim + 3 * hidden * dim;
  const std::size_t total = static_cast<std::size_t>(c.vocab_size) * dim + layers * per_layer + dim;
  const auto storage = random_vec(total, 6);

  corellm::MappedWeights w;
  std::span<const float> rest(storage);
  auto take = [&](std::size_t n) {
    auto s = rest.first(n);
    rest = rest.subspan(n);
    return s;
  };
  w.token_embedding_table = take(static_cast<std::size_t>(c.vocab_size) * dim);
  for (std::size_t l = 0; l < layers; ++l) {
    corellm::LayerWeights lw;
    lw.rms_att_weight = take(dim);
    lw.wq = take(dim * dim);
    lw.wk = take(dim * dim);
    lw.wv = take(dim * dim);
    lw.wo = take(dim * dim);
    lw.rms_ffn_weight = take(dim);
    lw.w1 = take(hidden * dim);
    lw.w2 = take(dim * hidden);
    lw.w3 = take(hidden * dim);
    w.layers.push_back(lw);
  }
  w.rms_final_weight = take(dim);
  w.wcls = w.token_embedding_table;
  w.tied = true;

  const KernelVariant v = state.range(0) == 0 ? KernelVariant::kScalar : KernelVariant::kVectorized;
  corellm::TransformerSession session(c, w, v);
  int pos = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(session.forward(pos % 100, pos).data());
    pos = (pos + 1) % c.seq_len;
  }
  state.SetLabel(corellm::to_string(v));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
