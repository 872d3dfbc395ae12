#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pan/errors.hpp"
#include "pan/matrix.hpp"
#include "pan/numeric.hpp"
#include "pan/rng.hpp"
#include "pan/session_data.hpp"

namespace pan {

// Which interest branches feed the scorer.
enum class InterestMode {
  full,           // time-aware short-term + long-term
  long_only,      // long-term branch alone
  short_vanilla,  // short-term attention without the time-interval term
};

enum class FusionMode { gated, average, hadamard, concat };

enum class LossMode {
  binary_cross_entropy,  // softmax followed by per-item binary cross-entropy
  categorical,           // -log y_label
};

inline std::string to_string(InterestMode m) {
  switch (m) {
    case InterestMode::full: return "full";
    case InterestMode::long_only: return "long_only";
    case InterestMode::short_vanilla: return "short_vanilla";
  }
  return "?";
}

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::gated: return "gated";
    case FusionMode::average: return "average";
    case FusionMode::hadamard: return "hadamard";
    case FusionMode::concat: return "concat";
  }
  return "?";
}

inline std::string to_string(LossMode m) {
  return m == LossMode::binary_cross_entropy ? "bce" : "categorical";
}

inline InterestMode parse_interest_mode(std::string_view s) {
  if (s == "full") return InterestMode::full;
  if (s == "long_only") return InterestMode::long_only;
  if (s == "short_vanilla") return InterestMode::short_vanilla;
  throw ConfigError("unknown interest_mode '" + std::string(s) + "'");
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "gated") return FusionMode::gated;
  if (s == "average") return FusionMode::average;
  if (s == "hadamard") return FusionMode::hadamard;
  if (s == "concat") return FusionMode::concat;
  throw ConfigError("unknown fusion_mode '" + std::string(s) + "'");
}

inline LossMode parse_loss_mode(std::string_view s) {
  if (s == "bce") return LossMode::binary_cross_entropy;
  if (s == "categorical") return LossMode::categorical;
  throw ConfigError("unknown loss_mode '" + std::string(s) + "'");
}

struct Hyperparams {
  std::size_t dim = 128;
  std::size_t batch_size = 128;
  double lr = 0.001;
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 10;
  double dropout = 0.5;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;
  InterestMode interest_mode = InterestMode::full;
  FusionMode fusion_mode = FusionMode::gated;
  LossMode loss_mode = LossMode::binary_cross_entropy;
  bool shared_output_embedding = true;
  double weight_init_std = 0.05;
  double embedding_init_std = 0.002;
  std::size_t eval_k = 20;

  void validate() const {
    if (dim == 0 || dim % 2 != 0) {
      throw ConfigError("dim must be a positive even number, got " + std::to_string(dim));
    }
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
    if (lr_decay_every == 0) throw ConfigError("lr_decay_every must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(weight_init_std > 0.0) || !(embedding_init_std > 0.0)) {
      throw ConfigError("init standard deviations must be positive");
    }
    if (eval_k == 0) throw ConfigError("eval_k must be positive");
  }

  // Learning rate for a 1-based epoch: lr * lr_decay^floor((epoch-1)/every).
  double lr_for_epoch(std::size_t epoch) const {
    const auto steps = epoch == 0 ? 0 : (epoch - 1) / lr_decay_every;
    return lr * std::pow(lr_decay, static_cast<double>(steps));
  }
};

struct AttentionWeights {
  Matrix query;   // d x d, applied to m_n (short) or the session mean (long)
  Matrix key;     // d x d, applied to each m_i
  Matrix time;    // d x d, applied to r_i; empty for the long-term branch
  Matrix score;   // d x 1
  Matrix bias;    // d x 1
};

struct MlpWeights {
  Matrix w1;  // d x d
  Matrix b1;  // d x 1
  Matrix w2;  // d x d, used as u^T W2 (row-vector convention)
  Matrix b2;  // d x 1
};

struct GateWeights {
  Matrix w_short;  // d x d
  Matrix w_long;   // d x d
  Matrix w_mean;   // d x d
  Matrix bias;     // d x 1
};

struct PanParams {
  Matrix item_embedding;    // |V| x d
  AttentionWeights short_attn;
  AttentionWeights long_attn;
  MlpWeights mlp_short;
  MlpWeights mlp_long;
  GateWeights gate;
  Matrix bilinear;          // d x d, or d x 2d for concat fusion
  Matrix output_embedding;  // |V| x d when not shared with item_embedding, else empty

  // Bumped whenever the tensors change in place; forward caches record it.
  std::uint64_t version = 0;

  std::size_t dim() const { return item_embedding.cols(); }
  std::size_t vocab_size() const { return item_embedding.rows(); }
  const Matrix& scoring_embedding() const {
    return output_embedding.empty() ? item_embedding : output_embedding;
  }

  // Visits every tensor with its stable name. Empty tensors are skipped.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    auto emit = [&](const char* name, auto& m) {
      if (!m.empty()) f(std::string_view(name), m);
    };
    emit("item_embedding", self.item_embedding);
    emit("short.query", self.short_attn.query);
    emit("short.key", self.short_attn.key);
    emit("short.time", self.short_attn.time);
    emit("short.score", self.short_attn.score);
    emit("short.bias", self.short_attn.bias);
    emit("long.query", self.long_attn.query);
    emit("long.key", self.long_attn.key);
    emit("long.score", self.long_attn.score);
    emit("long.bias", self.long_attn.bias);
    emit("mlp_short.w1", self.mlp_short.w1);
    emit("mlp_short.b1", self.mlp_short.b1);
    emit("mlp_short.w2", self.mlp_short.w2);
    emit("mlp_short.b2", self.mlp_short.b2);
    emit("mlp_long.w1", self.mlp_long.w1);
    emit("mlp_long.b1", self.mlp_long.b1);
    emit("mlp_long.w2", self.mlp_long.w2);
    emit("mlp_long.b2", self.mlp_long.b2);
    emit("gate.w_short", self.gate.w_short);
    emit("gate.w_long", self.gate.w_long);
    emit("gate.w_mean", self.gate.w_mean);
    emit("gate.bias", self.gate.bias);
    emit("bilinear", self.bilinear);
    emit("output_embedding", self.output_embedding);
  }

  template <typename F>
  void for_each_tensor(F&& f) { visit(*this, std::forward<F>(f)); }
  template <typename F>
  void for_each_tensor(F&& f) const { visit(*this, std::forward<F>(f)); }

  Matrix* find(std::string_view name) {
    Matrix* hit = nullptr;
    for_each_tensor([&](std::string_view n, Matrix& m) {
      if (n == name) hit = &m;
    });
    return hit;
  }

  PanParams zeros_like() const {
    PanParams z = *this;
    z.for_each_tensor([](std::string_view, Matrix& m) { m.fill(0.0); });
    z.version = 0;
    return z;
  }

  bool same_values(const PanParams& o) const {
    std::vector<const Matrix*> mine, theirs;
    for_each_tensor([&](std::string_view, const Matrix& m) { mine.push_back(&m); });
    o.for_each_tensor([&](std::string_view, const Matrix& m) { theirs.push_back(&m); });
    if (mine.size() != theirs.size()) return false;
    for (std::size_t i = 0; i < mine.size(); ++i)
      if (!(*mine[i] == *theirs[i])) return false;
    return true;
  }
};

// Weight matrices ~ N(0, weight_init_std^2), embeddings ~ N(0,
// embedding_init_std^2), biases zero.
inline PanParams init_params(const Hyperparams& hp, std::size_t vocab_size, SeededRng& rng) {
  hp.validate();
  if (vocab_size == 0) throw ConfigError("init_params: empty vocabulary");
  const std::size_t d = hp.dim;
  auto w = [&](std::size_t r, std::size_t c) { return gaussian_init(r, c, hp.weight_init_std, rng); };
  auto zero = [&] { return Matrix(d, 1); };
  PanParams p;
  p.item_embedding = gaussian_init(vocab_size, d, hp.embedding_init_std, rng);
  p.short_attn = {w(d, d), w(d, d), w(d, d), w(d, 1), zero()};
  p.long_attn = {w(d, d), w(d, d), Matrix{}, w(d, 1), zero()};
  p.mlp_short = {w(d, d), zero(), w(d, d), zero()};
  p.mlp_long = {w(d, d), zero(), w(d, d), zero()};
  p.gate = {w(d, d), w(d, d), w(d, d), zero()};
  p.bilinear = w(d, hp.fusion_mode == FusionMode::concat ? 2 * d : d);
  if (!hp.shared_output_embedding) {
    p.output_embedding = gaussian_init(vocab_size, d, hp.embedding_init_std, rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward components
// ---------------------------------------------------------------------------

// Row i holds the encoding of t_n - t_i, where t_n is the last timestamp:
// even coordinate 2j is sin(dt / 10000^(2j/d)), odd coordinate 2j+1 is
// cos(dt / 10000^((2j+1)/d)).
inline Matrix time_interval_embedding(std::span<const std::int64_t> timestamps, std::size_t d) {
  if (d == 0 || d % 2 != 0) {
    throw ConfigError("time_interval_embedding: dimension must be even, got " + std::to_string(d));
  }
  if (timestamps.empty()) throw std::invalid_argument("time_interval_embedding: empty sequence");
  const std::int64_t last = timestamps.back();
  Matrix r(timestamps.size(), d);
  std::vector<double> inv_freq(d);
  for (std::size_t k = 0; k < d; ++k) {
    inv_freq[k] = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(d));
  }
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (timestamps[i] > last) {
      throw std::invalid_argument("time_interval_embedding: timestamp after the last click");
    }
    const double dt = static_cast<double>(last - timestamps[i]);
    for (std::size_t k = 0; k < d; k += 2) {
      r(i, k) = std::sin(dt * inv_freq[k]);
      r(i, k + 1) = std::cos(dt * inv_freq[k + 1]);
    }
  }
  return r;
}

struct AttentionResult {
  Matrix context;  // d x 1
  Matrix weights;  // n x 1, sums to one
  Matrix hidden;   // n x d, tanh activations
  Matrix query;    // d x 1, the vector fed through the query matrix
};

namespace detail {

// o_i = v^T tanh(Wq x + Wk m_i [+ Wr r_i] + b); alpha = softmax(o);
// context = sum_i alpha_i m_i.
inline AttentionResult additive_attention(const Matrix& items, const Matrix& query_vec,
                                          const Matrix* times, const AttentionWeights& w) {
  const std::size_t n = items.rows();
  if (n == 0) throw std::invalid_argument("attention: empty item sequence");
  const std::size_t d = items.cols();
  Matrix pre = matmul(items, transpose(w.key));
  if (times) pre += matmul(*times, transpose(w.time));
  const Matrix shared = matmul(w.query, query_vec);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) pre(i, k) += shared[k] + w.bias[k];
  Matrix hidden = tanh_m(pre);
  Matrix weights = softmax(matmul(hidden, w.score));
  Matrix context = matmul_tn(items, weights);
  return {std::move(context), std::move(weights), std::move(hidden), query_vec};
}

struct AttentionGrads {
  Matrix d_items;  // n x d
  Matrix d_query;  // d x 1
};

inline AttentionGrads additive_attention_backward(const AttentionResult& fwd, const Matrix& items,
                                                  const Matrix* times, const AttentionWeights& w,
                                                  const Matrix& d_context, AttentionWeights& g) {
  const std::size_t n = items.rows();
  const std::size_t d = items.cols();
  // context = items^T alpha
  Matrix d_items(n, d);
  add_outer(d_items, fwd.weights, d_context);
  Matrix d_alpha = matmul(items, d_context);
  Matrix d_scores = softmax_backward(fwd.weights, d_alpha);
  // scores = hidden * v
  g.score += matmul_tn(fwd.hidden, d_scores);
  Matrix d_hidden(n, d);
  add_outer(d_hidden, d_scores, w.score);
  Matrix d_pre = tanh_backward(fwd.hidden, d_hidden);
  Matrix d_shared(d, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) d_shared[k] += d_pre(i, k);
  g.bias += d_shared;
  g.key += matmul_tn(d_pre, items);
  d_items += matmul(d_pre, w.key);
  if (times) g.time += matmul_tn(d_pre, *times);
  add_outer(g.query, d_shared, fwd.query);
  return {std::move(d_items), matmul_tn(w.query, d_shared)};
}

}  // namespace detail

// Time-aware short-term attention keyed on the last item. Passing an empty
// time matrix drops the interval term.
inline AttentionResult short_term_attention(const Matrix& items, const Matrix& times,
                                            const PanParams& p) {
  if (items.rows() == 0) throw std::invalid_argument("short_term_attention: empty prefix");
  const Matrix last = items.row_vector(items.rows() - 1);
  return detail::additive_attention(items, last, times.empty() ? nullptr : &times, p.short_attn);
}

inline Matrix session_mean(const Matrix& items) {
  Matrix a(items.cols(), 1);
  for (std::size_t i = 0; i < items.rows(); ++i)
    for (std::size_t k = 0; k < items.cols(); ++k) a[k] += items(i, k);
  a *= 1.0 / static_cast<double>(items.rows());
  return a;
}

// Long-term attention keyed on the session mean; result.query holds that mean.
inline AttentionResult long_term_attention(const Matrix& items, const PanParams& p) {
  if (items.rows() == 0) throw std::invalid_argument("long_term_attention: empty prefix");
  return detail::additive_attention(items, session_mean(items), nullptr, p.long_attn);
}

struct MlpResult {
  Matrix output;  // d x 1
  Matrix hidden;  // d x 1
};

// h = tanh(W1 c + b1)^T W2 + b2
inline MlpResult mlp_transform(const Matrix& c, const MlpWeights& w) {
  if (c.rows() != w.w1.cols() || c.cols() != 1) {
    throw DimensionError("mlp_transform: input " + c.shape() + " vs W1 " + w.w1.shape());
  }
  Matrix hidden = tanh_m(matmul(w.w1, c) + w.b1);
  Matrix out = matmul_tn(w.w2, hidden) + w.b2;
  return {std::move(out), std::move(hidden)};
}

inline Matrix mlp_backward(const MlpResult& fwd, const Matrix& c, const MlpWeights& w,
                           const Matrix& d_out, MlpWeights& g) {
  add_outer(g.w2, fwd.hidden, d_out);
  g.b2 += d_out;
  Matrix d_pre = tanh_backward(fwd.hidden, matmul(w.w2, d_out));
  add_outer(g.w1, d_pre, c);
  g.b1 += d_pre;
  return matmul_tn(w.w1, d_pre);
}

struct FusionResult {
  Matrix hybrid;  // d x 1 (2d x 1 for concat)
  Matrix gate;    // d x 1 for gated fusion, else empty
};

inline FusionResult fuse_interests(const Matrix& h_short, const Matrix& h_long, const Matrix& mean,
                                   const GateWeights& g, FusionMode mode) {
  if (!h_short.same_shape(h_long)) {
    throw DimensionError("fuse_interests: " + h_short.shape() + " vs " + h_long.shape());
  }
  switch (mode) {
    case FusionMode::gated: {
      Matrix pre = matmul(g.w_short, h_short) + matmul(g.w_long, h_long) + matmul(g.w_mean, mean) + g.bias;
      Matrix beta = sigmoid_m(pre);
      Matrix h(h_short.rows(), 1);
      for (std::size_t k = 0; k < h.size(); ++k) {
        h[k] = beta[k] * h_short[k] + (1.0 - beta[k]) * h_long[k];
      }
      return {std::move(h), std::move(beta)};
    }
    case FusionMode::average: {
      Matrix h = h_short + h_long;
      h *= 0.5;
      return {std::move(h), Matrix{}};
    }
    case FusionMode::hadamard:
      return {hadamard(h_short, h_long), Matrix{}};
    case FusionMode::concat:
      return {vconcat(h_short, h_long), Matrix{}};
  }
  throw ConfigError("fuse_interests: unknown fusion mode");
}

struct ScoreResult {
  Matrix logits;  // |V| x 1
  Matrix probs;   // |V| x 1
  Matrix projected;  // B h, d x 1
};

// z_i = emb_i^T B h; y = softmax(z).
inline ScoreResult score_items(const Matrix& h, const Matrix& embedding, const Matrix& bilinear) {
  if (bilinear.cols() != h.rows() || h.cols() != 1) {
    throw DimensionError("score_items: h " + h.shape() + " vs B " + bilinear.shape());
  }
  if (bilinear.rows() != embedding.cols()) {
    throw DimensionError("score_items: B " + bilinear.shape() + " vs embedding " + embedding.shape());
  }
  Matrix projected = matmul(bilinear, h);
  Matrix logits = matmul(embedding, projected);
  Matrix probs = softmax(logits);
  return {std::move(logits), std::move(probs), std::move(projected)};
}

inline constexpr double kProbClamp = 1e-10;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// Binary cross-entropy summed over every item against the one-hot label, or
// categorical cross-entropy, with probabilities clamped before the logs.
inline double loss(const Matrix& probs, std::size_t label,
                   LossMode mode = LossMode::binary_cross_entropy) {
  if (label >= probs.size()) throw std::out_of_range("loss: label outside vocabulary");
  if (mode == LossMode::categorical) return -std::log(clamp_prob(probs[label]));
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    total += i == label ? std::log(p) : std::log(1.0 - p);
  }
  return -total;
}

// dL/dy for loss(); zero wherever the clamp is active.
inline Matrix loss_backward(const Matrix& probs, std::size_t label, LossMode mode) {
  Matrix dy(probs.rows(), probs.cols());
  auto inside = [](double p) { return p > kProbClamp && p < 1.0 - kProbClamp; };
  if (mode == LossMode::categorical) {
    if (inside(probs[label])) dy[label] = -1.0 / probs[label];
    return dy;
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!inside(probs[i])) continue;
    dy[i] = i == label ? -1.0 / probs[i] : 1.0 / (1.0 - probs[i]);
  }
  return dy;
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ForwardCache {
  const PanParams* params = nullptr;
  std::uint64_t params_version = 0;
  InterestMode interest_mode = InterestMode::full;
  FusionMode fusion_mode = FusionMode::gated;
  LossMode loss_mode = LossMode::binary_cross_entropy;

  std::vector<std::size_t> items;
  Matrix item_mask;   // dropout multipliers on the embedded items, or empty
  Matrix embedded;    // n x d, after dropout
  Matrix intervals;   // n x d time-interval encodings

  AttentionResult short_attn;
  AttentionResult long_attn;  // long_attn.query is the session mean a
  MlpResult mlp_short;
  MlpResult mlp_long;
  Matrix short_mask;
  Matrix long_mask;
  Matrix h_short;  // after dropout
  Matrix h_long;   // after dropout
  FusionResult fusion;
  ScoreResult scores;

  const Matrix& probs() const { return scores.probs; }
  const Matrix& mean() const { return long_attn.query; }
};

inline ForwardCache forward(const SessionPrefix& prefix, const PanParams& p, const Hyperparams& hp,
                            SeededRng& rng, bool training) {
  const std::size_t n = prefix.items.size();
  if (n == 0) throw std::invalid_argument("forward: empty prefix");
  if (prefix.timestamps.size() != n) {
    throw std::invalid_argument("forward: items and timestamps differ in length");
  }
  const std::size_t d = p.dim();
  if (d != hp.dim) throw DimensionError("forward: params dim does not match hyperparameters");

  ForwardCache c;
  c.params = &p;
  c.params_version = p.version;
  c.interest_mode = hp.interest_mode;
  c.fusion_mode = hp.fusion_mode;
  c.loss_mode = hp.loss_mode;
  c.items = prefix.items;

  Matrix raw(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (prefix.items[i] >= p.vocab_size()) throw std::out_of_range("forward: item index outside vocabulary");
    auto src = p.item_embedding.row(prefix.items[i]);
    std::copy(src.begin(), src.end(), raw.row(i).begin());
  }
  auto dropped = dropout(raw, hp.dropout, rng, training);
  c.embedded = std::move(dropped.output);
  c.item_mask = std::move(dropped.mask);

  c.long_attn = long_term_attention(c.embedded, p);
  c.mlp_long = mlp_transform(c.long_attn.context, p.mlp_long);

  if (hp.interest_mode == InterestMode::long_only) {
    auto dl = dropout(c.mlp_long.output, hp.dropout, rng, training);
    c.h_long = std::move(dl.output);
    c.long_mask = std::move(dl.mask);
    c.fusion = {c.h_long, Matrix{}};
  } else {
    if (hp.interest_mode == InterestMode::full) {
      c.intervals = time_interval_embedding(prefix.timestamps, d);
    }
    c.short_attn = short_term_attention(c.embedded, c.intervals, p);
    c.mlp_short = mlp_transform(c.short_attn.context, p.mlp_short);
    auto ds = dropout(c.mlp_short.output, hp.dropout, rng, training);
    c.h_short = std::move(ds.output);
    c.short_mask = std::move(ds.mask);
    auto dl = dropout(c.mlp_long.output, hp.dropout, rng, training);
    c.h_long = std::move(dl.output);
    c.long_mask = std::move(dl.mask);
    c.fusion = fuse_interests(c.h_short, c.h_long, c.mean(), p.gate, hp.fusion_mode);
  }
  c.scores = score_items(c.fusion.hybrid, p.scoring_embedding(), p.bilinear);
  return c;
}

// Adds scale * dL/dparams into grads. grads must have the shapes of params
// (see PanParams::zeros_like). Returns the example's loss.
inline double accumulate_backward(const ForwardCache& c, std::size_t label, const PanParams& p,
                                  PanParams& grads, double scale = 1.0) {
  if (c.params != &p || c.params_version != p.version) {
    throw ContractError("backward: forward cache was built from different parameters");
  }
  const Matrix& probs = c.probs();
  if (label >= probs.size()) throw std::out_of_range("backward: label outside vocabulary");
  const std::size_t n = c.items.size();
  const std::size_t d = p.dim();
  const double value = loss(probs, label, c.loss_mode);

  Matrix d_logits = softmax_backward(probs, loss_backward(probs, label, c.loss_mode));
  d_logits *= scale;

  // logits = E (B h)
  const Matrix& emb = p.scoring_embedding();
  Matrix& d_emb = p.output_embedding.empty() ? grads.item_embedding : grads.output_embedding;
  add_outer(d_emb, d_logits, c.scores.projected);
  Matrix d_projected = matmul_tn(emb, d_logits);
  add_outer(grads.bilinear, d_projected, c.fusion.hybrid);
  Matrix d_hybrid = matmul_tn(p.bilinear, d_projected);

  Matrix d_h_short(d, 1);
  Matrix d_h_long(d, 1);
  Matrix d_mean(d, 1);
  if (c.interest_mode == InterestMode::long_only) {
    d_h_long = d_hybrid;
  } else {
    switch (c.fusion_mode) {
      case FusionMode::gated: {
        const Matrix& beta = c.fusion.gate;
        Matrix d_beta(d, 1);
        for (std::size_t k = 0; k < d; ++k) {
          d_h_short[k] = d_hybrid[k] * beta[k];
          d_h_long[k] = d_hybrid[k] * (1.0 - beta[k]);
          d_beta[k] = d_hybrid[k] * (c.h_short[k] - c.h_long[k]);
        }
        Matrix d_pre = sigmoid_backward(beta, d_beta);
        add_outer(grads.gate.w_short, d_pre, c.h_short);
        add_outer(grads.gate.w_long, d_pre, c.h_long);
        add_outer(grads.gate.w_mean, d_pre, c.mean());
        grads.gate.bias += d_pre;
        d_h_short += matmul_tn(p.gate.w_short, d_pre);
        d_h_long += matmul_tn(p.gate.w_long, d_pre);
        d_mean += matmul_tn(p.gate.w_mean, d_pre);
        break;
      }
      case FusionMode::average:
        d_h_short = d_hybrid * 0.5;
        d_h_long = d_hybrid * 0.5;
        break;
      case FusionMode::hadamard:
        d_h_short = hadamard(d_hybrid, c.h_long);
        d_h_long = hadamard(d_hybrid, c.h_short);
        break;
      case FusionMode::concat:
        d_h_short = row_slice(d_hybrid, 0, d);
        d_h_long = row_slice(d_hybrid, d, d);
        break;
    }
  }

  Matrix d_embedded(n, d);
  {
    Matrix d_ctx = mlp_backward(c.mlp_long, c.long_attn.context, p.mlp_long,
                                apply_mask(d_h_long, c.long_mask), grads.mlp_long);
    auto ag = detail::additive_attention_backward(c.long_attn, c.embedded, nullptr, p.long_attn,
                                                  d_ctx, grads.long_attn);
    d_embedded += ag.d_items;
    d_mean += ag.d_query;
  }
  if (c.interest_mode != InterestMode::long_only) {
    Matrix d_ctx = mlp_backward(c.mlp_short, c.short_attn.context, p.mlp_short,
                                apply_mask(d_h_short, c.short_mask), grads.mlp_short);
    const Matrix* times = c.intervals.empty() ? nullptr : &c.intervals;
    auto ag = detail::additive_attention_backward(c.short_attn, c.embedded, times, p.short_attn,
                                                  d_ctx, grads.short_attn);
    d_embedded += ag.d_items;
    auto last = d_embedded.row(n - 1);
    for (std::size_t k = 0; k < d; ++k) last[k] += ag.d_query[k];
  }
  // a = mean of embedded rows
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) d_embedded(i, k) += d_mean[k] * inv_n;

  Matrix d_raw = apply_mask(d_embedded, c.item_mask);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = grads.item_embedding.row(c.items[i]);
    auto src = d_raw.row(i);
    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
  }
  return value;
}

inline PanParams backward(const ForwardCache& c, std::size_t label, const PanParams& p) {
  PanParams grads = p.zeros_like();
  accumulate_backward(c, label, p, grads);
  return grads;
}

// Inference-mode logits for ranking.
inline Matrix predict_logits(const SessionPrefix& prefix, const PanParams& p, const Hyperparams& hp) {
  SeededRng unused(0);
  return forward(prefix, p, hp, unused, false).scores.logits;
}

}  // namespace pan
