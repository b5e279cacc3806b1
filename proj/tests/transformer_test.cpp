#include "corellm/transformer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "alloc_counter.hpp"
#include "corellm/error.hpp"
#include "corellm/model_format.hpp"
#include "fixtures.hpp"

namespace corellm {
namespace {

using testing::FixtureDims;
using testing::FixtureSpec;

// Straight double-precision decoder written from the architecture definition.
// It keeps every past k/v vector per step and recomputes attention over all of
// them, so it shares no state or kernels with the session.
class ReferenceDecoder {
 public:
  ReferenceDecoder(const ModelConfig& c, const MappedWeights& w) : c_(c), w_(w) {}

  std::vector<double> step(int token) {
    const int dim = c_.dim;
    const int hs = c_.head_size();
    const int kv_dim = c_.kv_dim();
    const int pos = static_cast<int>(keys_.size());
    keys_.emplace_back(c_.n_layers);
    values_.emplace_back(c_.n_layers);

    std::vector<double> x(dim);
    for (int i = 0; i < dim; ++i) x[i] = w_.token_embedding_table[std::size_t(token) * dim + i];

    for (int l = 0; l < c_.n_layers; ++l) {
      const LayerWeights& lw = w_.layers[l];
      auto xb = norm(x, lw.rms_att_weight);
      auto q = matvec(lw.wq, xb, dim);
      auto k = matvec(lw.wk, xb, kv_dim);
      auto v = matvec(lw.wv, xb, kv_dim);
      rotate(q, pos);
      rotate(k, pos);
      keys_[pos][l] = k;
      values_[pos][l] = v;

      std::vector<double> out(dim, 0.0);
      for (int h = 0; h < c_.n_heads; ++h) {
        const int g = h / (c_.n_heads / c_.n_kv_heads);
        std::vector<double> score(pos + 1);
        double mx = -INFINITY;
        for (int t = 0; t <= pos; ++t) {
          double s = 0;
          for (int i = 0; i < hs; ++i) s += q[h * hs + i] * keys_[t][l][g * hs + i];
          score[t] = s / std::sqrt(double(hs));
          mx = std::max(mx, score[t]);
        }
        double total = 0;
        for (double& s : score) total += s = std::exp(s - mx);
        for (int t = 0; t <= pos; ++t) {
          for (int i = 0; i < hs; ++i) out[h * hs + i] += score[t] / total * values_[t][l][g * hs + i];
        }
      }
      auto proj = matvec(lw.wo, out, dim);
      for (int i = 0; i < dim; ++i) x[i] += proj[i];

      xb = norm(x, lw.rms_ffn_weight);
      auto a = matvec(lw.w1, xb, c_.hidden_dim);
      auto b = matvec(lw.w3, xb, c_.hidden_dim);
      for (int i = 0; i < c_.hidden_dim; ++i) a[i] = a[i] / (1.0 + std::exp(-a[i])) * b[i];
      auto down = matvec(lw.w2, a, dim);
      for (int i = 0; i < dim; ++i) x[i] += down[i];
    }
    x = norm(x, w_.rms_final_weight);
    return matvec(w_.wcls, x, c_.vocab_size);
  }

 private:
  static std::vector<double> matvec(std::span<const float> m, const std::vector<double>& v, int rows) {
    std::vector<double> out(rows);
    const std::size_t n = v.size();
    for (int r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += m[std::size_t(r) * n + j] * v[j];
      out[r] = s;
    }
    return out;
  }

  static std::vector<double> norm(const std::vector<double>& x, std::span<const float> w) {
    double ss = 0;
    for (double v : x) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / double(x.size()) + 1e-5);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * w[i];
    return out;
  }

  void rotate(std::vector<double>& v, int pos) const {
    const int hs = c_.head_size();
    for (std::size_t i = 0; i < v.size(); i += 2) {
      const double angle = pos * std::pow(10000.0, -double(i % hs) / hs);
      const double a = v[i];
      const double b = v[i + 1];
      v[i] = a * std::cos(angle) - b * std::sin(angle);
      v[i + 1] = a * std::sin(angle) + b * std::cos(angle);
    }
  }

  ModelConfig c_;
  const MappedWeights& w_;
  std::vector<std::vector<std::vector<double>>> keys_;
  std::vector<std::vector<std::vector<double>>> values_;
};

class TransformerTest : public ::testing::Test {
 protected:
  Checkpoint load(const FixtureSpec& spec, const std::string& name = "model.bin") {
    return map_checkpoint(testing::write_checkpoint(dir_ / name, spec).path);
  }
  // Steps both variants through seq_len positions against the reference.
  static void expect_matches_reference(const Checkpoint& ckpt) {
    const ModelConfig& c = ckpt.config();
    for (KernelVariant v : {KernelVariant::kScalar, KernelVariant::kVectorized}) {
      ReferenceDecoder oracle(c, ckpt.weights());
      TransformerSession session(c, ckpt.weights(), v);
      for (int pos = 0; pos < c.seq_len; ++pos) {
        const int token = (pos * 11 + 3) % c.vocab_size;
        const auto got = session.forward(token, pos);
        const auto want = oracle.step(token);
        for (std::size_t i = 0; i < want.size(); ++i) {
          ASSERT_NEAR(got[i], want[i], 1e-4 * std::max(1.0, std::fabs(want[i])))
              << to_string(v) << " pos " << pos << " logit " << i;
        }
      }
    }
  }

  testing::TempDir dir_;
};

TEST_F(TransformerTest, ZeroModelGivesZeroLogits) {
  FixtureSpec spec;
  spec.fill = testing::Fill::kZero;
  const Checkpoint ckpt = load(spec);
  for (KernelVariant v : {KernelVariant::kScalar, KernelVariant::kVectorized}) {
    TransformerSession session(ckpt.config(), ckpt.weights(), v);
    for (int pos = 0; pos < 4; ++pos) {
      for (float logit : session.forward((pos * 5) % 16, pos)) ASSERT_EQ(logit, 0.0f);
    }
  }
}

TEST_F(TransformerTest, VectorizedMatchesScalarOnTinyFixture) {
  const Checkpoint ckpt = load(FixtureSpec{});
  TransformerSession scalar(ckpt.config(), ckpt.weights(), KernelVariant::kScalar);
  TransformerSession vec(ckpt.config(), ckpt.weights(), KernelVariant::kVectorized);
  const int tokens[] = {1, 7, 15, 3};
  for (int pos = 0; pos < 4; ++pos) {
    const auto a = scalar.forward(tokens[pos], pos);
    const auto b = vec.forward(tokens[pos], pos);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LE(std::fabs(a[i] - b[i]), 1e-4 * std::fabs(a[i])) << "pos " << pos << " logit " << i;
    }
  }
}

TEST_F(TransformerTest, FreshSessionsAreBitIdentical) {
  const Checkpoint ckpt = load(FixtureSpec{});
  for (KernelVariant v : {KernelVariant::kScalar, KernelVariant::kVectorized}) {
    TransformerSession a(ckpt.config(), ckpt.weights(), v);
    TransformerSession b(ckpt.config(), ckpt.weights(), v);
    const auto la = a.forward(5, 0);
    const auto lb = b.forward(5, 0);
    EXPECT_EQ(std::memcmp(la.data(), lb.data(), la.size_bytes()), 0);
  }
}

TEST_F(TransformerTest, MatchesRecomputingReference) {
  FixtureSpec spec;
  spec.dims = {32, 48, 2, 4, 2, 40, 12};
  spec.tied = false;
  spec.negative_vocab = true;
  expect_matches_reference(load(spec));
}

TEST_F(TransformerTest, SingleKeyValueHeadMatchesReference) {
  FixtureSpec spec;
  spec.dims = {32, 48, 1, 4, 1, 40, 6};
  expect_matches_reference(load(spec));
}

TEST_F(TransformerTest, FullHeadCountIsIdentityGrouping) {
  FixtureSpec spec;
  spec.dims = {32, 48, 1, 4, 4, 40, 6};
  const Checkpoint ckpt = load(spec);
  EXPECT_EQ(ckpt.config().kv_group(), 1);
  EXPECT_EQ(ckpt.config().kv_dim(), ckpt.config().dim);
  expect_matches_reference(ckpt);
}

TEST_F(TransformerTest, GarbageBeyondPositionIsIgnored) {
  FixtureSpec spec;
  spec.dims = {16, 32, 2, 4, 4, 20, 8};
  const Checkpoint ckpt = load(spec);
  TransformerSession clean(ckpt.config(), ckpt.weights());
  TransformerSession dirty(ckpt.config(), ckpt.weights());

  RunState& s = dirty.mutable_state();
  for (std::size_t i = 0; i < s.key_cache.size(); ++i) {
    s.key_cache[i] = 1e3f * float(i % 7);
    s.value_cache[i] = -1e3f * float(i % 5);
  }
  const int tokens[] = {2, 9, 4, 17};
  for (int pos = 0; pos < 4; ++pos) {
    const auto a = clean.forward(tokens[pos], pos);
    const auto b = dirty.forward(tokens[pos], pos);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size_bytes()), 0) << "pos " << pos;
  }
}

TEST_F(TransformerTest, AttentionRowsSumToOne) {
  FixtureSpec spec;
  spec.dims = {16, 32, 2, 4, 2, 20, 8};
  const Checkpoint ckpt = load(spec);
  TransformerSession session(ckpt.config(), ckpt.weights());
  const ModelConfig& c = ckpt.config();
  for (int pos = 0; pos < c.seq_len; ++pos) {
    session.forward(pos % c.vocab_size, pos);
    // att holds the last layer's weights.
    for (int h = 0; h < c.n_heads; ++h) {
      double sum = 0;
      for (int t = 0; t <= pos; ++t) sum += session.state().att[std::size_t(h) * c.seq_len + t];
      EXPECT_NEAR(sum, 1.0, 1e-6) << "pos " << pos << " head " << h;
    }
  }
}

TEST_F(TransformerTest, TiedClassifierReadsEmbedding) {
  const Checkpoint ckpt = load(FixtureSpec{});
  ASSERT_TRUE(ckpt.weights().tied);
  TransformerSession session(ckpt.config(), ckpt.weights(), KernelVariant::kScalar);
  const auto logits = session.forward(4, 0);
  const auto& x = session.state().x;  // final normed hidden state
  const auto emb = ckpt.weights().token_embedding_table;
  for (int v = 0; v < 16; ++v) {
    float s = kernels::dot(emb.subspan(std::size_t(v) * 8, 8), x.span(), KernelVariant::kScalar);
    EXPECT_EQ(logits[v], s);
  }
}

TEST_F(TransformerTest, RejectsBadTokenAndPosition) {
  const Checkpoint ckpt = load(FixtureSpec{});
  TransformerSession session(ckpt.config(), ckpt.weights());
  auto code = [&](int token, int pos) {
    try {
      session.forward(token, pos);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kFormat;
  };
  EXPECT_EQ(code(16, 0), ErrorCode::kIndex);
  EXPECT_EQ(code(-1, 0), ErrorCode::kIndex);
  EXPECT_EQ(code(0, 4), ErrorCode::kSequenceOverflow);
}

TEST_F(TransformerTest, ForwardDoesNotAllocate) {
  FixtureSpec spec;
  spec.dims = {64, 172, 2, 4, 2, 256, 16};
  const Checkpoint ckpt = load(spec);
  TransformerSession session(ckpt.config(), ckpt.weights());
  session.forward(1, 0);
  testing::CountAllocations counter;
  for (int pos = 1; pos < 16; ++pos) session.forward(pos, pos);
  EXPECT_EQ(counter.count(), 0u);
}

TEST_F(TransformerTest, SessionsShareWeights) {
  const Checkpoint ckpt = load(FixtureSpec{});
  TransformerSession a(ckpt.config(), ckpt.weights());
  TransformerSession b(ckpt.config(), ckpt.weights());
  EXPECT_EQ(&a.weights(), &b.weights());
  EXPECT_NE(a.state().logits.data(), b.state().logits.data());
}

}  // namespace
}  // namespace corellm
