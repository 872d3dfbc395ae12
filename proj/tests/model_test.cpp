#include <gtest/gtest.h>

#include <cmath>

#include "pan/model.hpp"
#include "scalar_oracle.hpp"
#include "test_util.hpp"

using namespace pan;
using testutil::toy_hyper;
using testutil::toy_params;
using testutil::toy_prefix;

namespace {

Matrix rows_of(const PanParams& p, const std::vector<std::size_t>& items) {
  Matrix m(items.size(), p.dim());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto src = p.item_embedding.row(items[i]);
    std::copy(src.begin(), src.end(), m.row(i).begin());
  }
  return m;
}

std::vector<oracle::Vec> vec_rows(const Matrix& m) {
  std::vector<oracle::Vec> out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.push_back(oracle::to_vec(m.row_vector(i)));
  return out;
}

void expect_close(const Matrix& got, const oracle::Vec& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "entry " << i;
}

}  // namespace

TEST(TimeIntervalEmbedding, ZeroIntervalPattern) {
  std::vector<std::int64_t> ts{5, 7, 7};
  Matrix r = time_interval_embedding(ts, 6);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(r(2, k), k % 2 == 0 ? 0.0 : 1.0);
    EXPECT_EQ(r(1, k), r(2, k));
  }
}

TEST(TimeIntervalEmbedding, MatchesScalarOracle) {
  std::vector<std::int64_t> ts{0, 100};
  Matrix r = time_interval_embedding(ts, 4);
  // dt = 100 for row 0.
  const oracle::Vec want = {std::sin(100.0), std::cos(100.0 / std::pow(10000.0, 0.25)),
                            std::sin(100.0 / std::pow(10000.0, 0.5)), std::cos(100.0 / std::pow(10000.0, 0.75))};
  expect_close(r.row_vector(0), want, 1e-10);
  expect_close(r.row_vector(0), oracle::time_embedding(100, 0, 4), 1e-10);
  SeededRng rng(6);
  auto p = toy_prefix(6, 5, rng);
  Matrix r2 = time_interval_embedding(p.timestamps, 8);
  for (std::size_t i = 0; i < 6; ++i) {
    expect_close(r2.row_vector(i), oracle::time_embedding(p.timestamps.back(), p.timestamps[i], 8), 1e-10);
  }
}

TEST(TimeIntervalEmbedding, OddDimensionRejected) {
  std::vector<std::int64_t> ts{1};
  EXPECT_THROW(time_interval_embedding(ts, 5), ConfigError);
}

TEST(ShortTermAttention, SingletonAndSymmetry) {
  SeededRng rng(1);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 6, rng);
  std::vector<std::int64_t> one{10};
  Matrix m1 = rows_of(p, {3});
  auto a = short_term_attention(m1, time_interval_embedding(one, 4), p);
  EXPECT_EQ(a.weights[0], 1.0);
  EXPECT_EQ(a.context, m1.row_vector(0));

  Matrix same = rows_of(p, {2, 2, 2});
  std::vector<std::int64_t> flat{5, 5, 5};
  auto b = short_term_attention(same, time_interval_embedding(flat, 4), p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b.weights[i], 1.0 / 3.0, 1e-15);
  EXPECT_THROW(short_term_attention(Matrix(0, 4), Matrix{}, p), std::invalid_argument);
}

TEST(ShortTermAttention, MatchesScalarOracle) {
  SeededRng rng(2);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 6, rng);
  auto prefix = toy_prefix(3, 6, rng);
  Matrix m = rows_of(p, prefix.items);
  Matrix r = time_interval_embedding(prefix.timestamps, 4);
  auto got = short_term_attention(m, r, p);
  auto rows = vec_rows(m), rrows = vec_rows(r);
  auto want = oracle::attention(rows, rows.back(), &rrows, p.short_attn);
  expect_close(got.weights, want.weights, 1e-10);
  expect_close(got.context, want.context, 1e-10);
  // Vanilla form drops the interval term.
  auto vanilla = short_term_attention(m, Matrix{}, p);
  expect_close(vanilla.context, oracle::attention(rows, rows.back(), nullptr, p.short_attn).context, 1e-10);
}

TEST(LongTermAttention, SingletonIdenticalAndOracle) {
  SeededRng rng(3);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 6, rng);
  Matrix m1 = rows_of(p, {4});
  auto a = long_term_attention(m1, p);
  EXPECT_EQ(a.query, m1.row_vector(0));
  EXPECT_EQ(a.context, m1.row_vector(0));

  Matrix same = rows_of(p, {1, 1, 1, 1});
  auto b = long_term_attention(same, p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b.weights[i], 0.25, 1e-15);
  expect_close(b.context, oracle::to_vec(same.row_vector(0)), 1e-15);

  Matrix m = rows_of(p, {0, 5, 2});
  auto got = long_term_attention(m, p);
  auto rows = vec_rows(m);
  auto want = oracle::attention(rows, oracle::mean(rows), nullptr, p.long_attn);
  expect_close(got.query, oracle::mean(rows), 1e-12);
  expect_close(got.weights, want.weights, 1e-10);
  expect_close(got.context, want.context, 1e-10);
}

TEST(MlpTransform, ReductionsAndOracle) {
  const std::size_t d = 4;
  Matrix c = Matrix::column(std::vector<double>{0.3, -1.2, 2.0, 0.0});
  MlpWeights zero{Matrix(d, d), Matrix(d, 1), Matrix(d, d), Matrix(d, 1)};
  EXPECT_EQ(mlp_transform(c, zero).output, Matrix(d, 1));
  MlpWeights ident{Matrix::identity(d), Matrix(d, 1), Matrix::identity(d), Matrix(d, 1)};
  EXPECT_EQ(mlp_transform(c, ident).output, tanh_m(c));

  SeededRng rng(4);
  auto p = toy_params(toy_hyper(d), 5, rng);
  Matrix x = gaussian_init(d, 1, 1.0, rng);
  expect_close(mlp_transform(x, p.mlp_short).output, oracle::mlp(oracle::to_vec(x), p.mlp_short), 1e-10);
}

TEST(FuseInterests, GateLimitsAverageAndOracle) {
  const std::size_t d = 4;
  SeededRng rng(5);
  auto p = toy_params(toy_hyper(d), 5, rng);
  Matrix hs = gaussian_init(d, 1, 1.0, rng), hl = gaussian_init(d, 1, 1.0, rng), a = gaussian_init(d, 1, 1.0, rng);

  GateWeights open{Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, 1, 50.0)};
  auto f = fuse_interests(hs, hl, a, open, FusionMode::gated);
  EXPECT_EQ(f.hybrid, hs);

  EXPECT_EQ(fuse_interests(hs, hs, a, p.gate, FusionMode::average).hybrid, hs);
  EXPECT_EQ(fuse_interests(hs, hl, a, p.gate, FusionMode::hadamard).hybrid, hadamard(hs, hl));
  EXPECT_EQ(fuse_interests(hs, hl, a, p.gate, FusionMode::concat).hybrid.rows(), 2 * d);

  auto g = fuse_interests(hs, hl, a, p.gate, FusionMode::gated);
  auto want = oracle::gated(oracle::to_vec(hs), oracle::to_vec(hl), oracle::to_vec(a), p.gate);
  expect_close(g.hybrid, want.h, 1e-10);
  expect_close(g.gate, want.beta, 1e-10);
}

TEST(ScoreItems, ArgmaxSumAndOracle) {
  const std::size_t d = 4;
  Matrix emb = Matrix::identity(d);  // orthogonal embeddings
  for (std::size_t k = 0; k < d; ++k) {
    auto s = score_items(emb.row_vector(k), emb, Matrix::identity(d));
    EXPECT_EQ(argmax(s.probs), k);
  }
  SeededRng rng(6);
  auto p = toy_params(toy_hyper(d), 6, rng);
  Matrix h = gaussian_init(d, 1, 1.0, rng);
  auto s = score_items(h, p.item_embedding, p.bilinear);
  EXPECT_NEAR(sum(s.probs), 1.0, 1e-12);
  expect_close(s.logits, oracle::scores(oracle::to_vec(h), p.item_embedding, p.bilinear), 1e-10);
  EXPECT_THROW(score_items(Matrix(d + 1, 1), p.item_embedding, p.bilinear), DimensionError);
}

TEST(Loss, ClosedFormsAndOracle) {
  EXPECT_NEAR(loss(Matrix{{0.5}, {0.5}}, 0), -2.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(loss(Matrix{{0.0}, {1.0}, {0.0}}, 1), 0.0, 1e-8);
  SeededRng rng(7);
  Matrix y = softmax(gaussian_init(5, 1, 1.0, rng));
  for (std::size_t label = 0; label < 5; ++label) {
    EXPECT_NEAR(loss(y, label), oracle::bce_loss(oracle::to_vec(y), label), 1e-10);
  }
  EXPECT_NEAR(loss(y, 2, LossMode::categorical), -std::log(y[2]), 1e-12);
}

TEST(Forward, SingleItemPrefix) {
  SeededRng rng(8);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 6, rng);
  SessionPrefix one{"s", {2}, {77}, 0};
  SeededRng r(0);
  auto c = forward(one, p, hp, r, false);
  EXPECT_EQ(c.short_attn.context, p.item_embedding.row_vector(2));
  EXPECT_EQ(c.long_attn.context, p.item_embedding.row_vector(2));
  // h interpolates the two MLP images of m_1.
  for (std::size_t k = 0; k < 4; ++k) {
    const double lo = std::min(c.h_short[k], c.h_long[k]), hi = std::max(c.h_short[k], c.h_long[k]);
    EXPECT_GE(c.fusion.hybrid[k], lo - 1e-15);
    EXPECT_LE(c.fusion.hybrid[k], hi + 1e-15);
  }
}

TEST(Forward, InferenceIsDeterministicAndMatchesChainedOracle) {
  SeededRng rng(9);
  for (std::size_t d : {4u, 6u}) {
    auto hp = toy_hyper(d);
    hp.dropout = 0.5;  // inactive at inference
    auto p = toy_params(hp, 7, rng);
    auto prefix = toy_prefix(4, 7, rng);
    SeededRng r1(1), r2(2);
    auto a = forward(prefix, p, hp, r1, false);
    auto b = forward(prefix, p, hp, r2, false);
    EXPECT_EQ(a.probs(), b.probs());
    expect_close(a.probs(), oracle::forward_probs(prefix, p), 1e-10);
  }
}

TEST(Forward, TrainingDropoutDependsOnStream) {
  SeededRng rng(10);
  auto hp = toy_hyper(6);
  hp.dropout = 0.5;
  auto p = toy_params(hp, 7, rng);
  auto prefix = toy_prefix(4, 7, rng);
  SeededRng r1(1), r2(1), r3(2);
  auto a = forward(prefix, p, hp, r1, true);
  EXPECT_EQ(a.probs(), forward(prefix, p, hp, r2, true).probs());
  EXPECT_NE(a.probs(), forward(prefix, p, hp, r3, true).probs());
}

TEST(Forward, TimeShiftInvariance) {
  SeededRng rng(11);
  auto hp = toy_hyper(6);
  auto p = toy_params(hp, 8, rng);
  for (int trial = 0; trial < 20; ++trial) {
    auto prefix = toy_prefix(1 + rng.uniform_index(6), 8, rng);
    auto shifted = prefix;
    const auto delta = static_cast<std::int64_t>(rng.uniform_index(1'000'000));
    for (auto& t : shifted.timestamps) t += delta;
    SeededRng r(0);
    EXPECT_EQ(forward(prefix, p, hp, r, false).probs(), forward(shifted, p, hp, r, false).probs());
  }
}

TEST(Forward, EqualTimestampsFoldIntervalTermIntoBias) {
  // With equal timestamps every r_i is the same vector r0, so the interval
  // term is a constant shift of the hidden pre-activation: full mode equals
  // the vanilla model whose short-term bias absorbs W_r r0.
  SeededRng rng(12);
  auto hp = toy_hyper(6);
  auto p = toy_params(hp, 8, rng);
  auto vanilla_hp = hp;
  vanilla_hp.interest_mode = InterestMode::short_vanilla;
  for (int trial = 0; trial < 20; ++trial) {
    auto prefix = toy_prefix(1 + rng.uniform_index(6), 8, rng);
    for (auto& t : prefix.timestamps) t = 424242;
    std::vector<std::int64_t> one{0};
    PanParams folded = p;
    folded.short_attn.bias += matmul(p.short_attn.time, transpose(time_interval_embedding(one, 6)));
    SeededRng r(0);
    auto full = forward(prefix, p, hp, r, false).probs();
    auto vanilla = forward(prefix, folded, vanilla_hp, r, false).probs();
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], vanilla[i], 1e-10);
  }
}

TEST(Forward, DistributionsAreValid) {
  SeededRng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    auto hp = toy_hyper(4);
    auto p = toy_params(hp, 9, rng);
    auto prefix = toy_prefix(1 + rng.uniform_index(8), 9, rng);
    SeededRng r(0);
    auto c = forward(prefix, p, hp, r, false);
    EXPECT_NEAR(sum(c.short_attn.weights), 1.0, 1e-10);
    EXPECT_NEAR(sum(c.long_attn.weights), 1.0, 1e-10);
    EXPECT_NEAR(sum(c.probs()), 1.0, 1e-10);
    for (double b : c.fusion.gate.data()) {
      EXPECT_GT(b, 0.0);
      EXPECT_LT(b, 1.0);
    }
  }
}

TEST(Forward, LongOnlyIgnoresShortBranch) {
  SeededRng rng(14);
  auto hp = toy_hyper(6, InterestMode::long_only);
  auto p = toy_params(hp, 8, rng);
  auto prefix = toy_prefix(5, 8, rng);
  SeededRng r(0);
  auto base = forward(prefix, p, hp, r, false).probs();
  PanParams q = p;
  for (auto* m : {&q.short_attn.query, &q.short_attn.key, &q.short_attn.time, &q.short_attn.score, &q.short_attn.bias}) {
    for (double& x : m->data()) x += rng.normal();
  }
  EXPECT_EQ(forward(prefix, q, hp, r, false).probs(), base);
}

TEST(Forward, GatedAtHalfEqualsAverageBitForBit) {
  SeededRng rng(15);
  auto gated_hp = toy_hyper(6, InterestMode::full, FusionMode::gated);
  auto avg_hp = toy_hyper(6, InterestMode::full, FusionMode::average);
  auto p = toy_params(gated_hp, 8, rng);
  p.gate.w_short.fill(0.0);
  p.gate.w_long.fill(0.0);
  p.gate.w_mean.fill(0.0);
  p.gate.bias.fill(0.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto prefix = toy_prefix(1 + rng.uniform_index(6), 8, rng);
    SeededRng r(0);
    auto g = forward(prefix, p, gated_hp, r, false);
    for (double b : g.fusion.gate.data()) EXPECT_EQ(b, 0.5);
    EXPECT_EQ(g.probs(), forward(prefix, p, avg_hp, r, false).probs());
  }
}

TEST(Forward, ConcatUsesWideBilinear) {
  SeededRng rng(16);
  auto hp = toy_hyper(4, InterestMode::full, FusionMode::concat);
  auto p = toy_params(hp, 5, rng);
  EXPECT_EQ(p.bilinear.cols(), 8u);
  auto prefix = toy_prefix(3, 5, rng);
  SeededRng r(0);
  EXPECT_NEAR(sum(forward(prefix, p, hp, r, false).probs()), 1.0, 1e-12);
}

TEST(Forward, RejectsBadInput) {
  SeededRng rng(17);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 5, rng);
  SeededRng r(0);
  EXPECT_THROW(forward(SessionPrefix{}, p, hp, r, false), std::invalid_argument);
  SessionPrefix bad{"s", {9}, {1}, 0};
  EXPECT_THROW(forward(bad, p, hp, r, false), std::out_of_range);
  Hyperparams odd = hp;
  odd.dim = 5;
  EXPECT_THROW(odd.validate(), ConfigError);
}

TEST(Backward, StaleCacheIsRejected) {
  SeededRng rng(18);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 5, rng);
  auto prefix = toy_prefix(3, 5, rng);
  SeededRng r(0);
  auto cache = forward(prefix, p, hp, r, false);
  PanParams other = p;
  EXPECT_THROW(backward(cache, prefix.label, other), ContractError);
  ++p.version;
  EXPECT_THROW(backward(cache, prefix.label, p), ContractError);
}

TEST(Backward, OneHotPredictionGivesNearZeroGradients) {
  SeededRng rng(19);
  auto hp = toy_hyper(4);
  auto p = toy_params(hp, 5, rng);
  auto prefix = toy_prefix(3, 5, rng);
  // Scale the bilinear map until the prediction saturates on its argmax.
  SeededRng r(0);
  auto c0 = forward(prefix, p, hp, r, false);
  const std::size_t top = argmax(c0.probs());
  p.bilinear *= 1e4;
  auto c = forward(prefix, p, hp, r, false);
  ASSERT_GT(c.probs()[top], 1.0 - 1e-10);
  auto g = backward(c, top, p);
  g.for_each_tensor([](std::string_view name, const Matrix& m) { EXPECT_LT(frobenius_norm(m), 1e-6) << name; });
}
