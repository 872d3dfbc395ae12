#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "pan/matrix.hpp"
#include "pan/rng.hpp"

namespace pan {

// softmax over every entry of a vector-shaped matrix, max-subtracted.
inline Matrix softmax(const Matrix& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  if (!v.is_vector()) throw DimensionError("softmax: expected a vector, got " + v.shape());
  const double peak = *std::max_element(v.data().begin(), v.data().end());
  Matrix out = v;
  double total = 0.0;
  for (double& x : out.data()) {
    x = std::exp(x - peak);
    total += x;
  }
  for (double& x : out.data()) x /= total;
  return out;
}

// Given y = softmax(z) and dL/dy, returns dL/dz.
inline Matrix softmax_backward(const Matrix& y, const Matrix& dy) {
  const double inner = dot(y, dy);
  Matrix dz = y;
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = y[i] * (dy[i] - inner);
  return dz;
}

inline Matrix tanh_m(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix sigmoid_m(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

// dL/dx from y = tanh(x) and dL/dy.
inline Matrix tanh_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y[i] * y[i];
  return dx;
}

// dL/dx from y = sigmoid(x) and dL/dy.
inline Matrix sigmoid_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
  return dx;
}

struct DropoutResult {
  Matrix output;
  // Per-entry multiplier: 0 for dropped entries, 1/(1-rate) for survivors.
  // Empty when dropout was a no-op.
  Matrix mask;
};

// Inverted dropout. Inference (or rate 0) is the identity and draws nothing
// from rng.
inline DropoutResult dropout(const Matrix& x, double rate, SeededRng& rng, bool training) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return {x, Matrix{}};
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  Matrix out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  return {std::move(out), std::move(mask)};
}

// Applies a mask recorded by dropout(); an empty mask is the identity.
inline Matrix apply_mask(const Matrix& x, const Matrix& mask) {
  return mask.empty() ? x : hadamard(x, mask);
}

inline Matrix gaussian_init(std::size_t rows, std::size_t cols, double stddev, SeededRng& rng) {
  if (!(stddev > 0.0)) throw std::invalid_argument("gaussian_init: stddev must be positive");
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.normal(0.0, stddev);
  return out;
}

struct AdamState {
  Matrix m;
  Matrix v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const Matrix& like)
      : m(like.rows(), like.cols()), v(like.rows(), like.cols()) {}
};

// One bias-corrected Adam update of param in place.
inline void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr) {
  if (!param.same_shape(grad)) {
    throw DimensionError("adam_step: param " + param.shape() + " vs grad " + grad.shape());
  }
  if (state.m.empty() && !param.empty()) state = AdamState(param);
  if (!state.m.same_shape(param) || !state.v.same_shape(param)) {
    throw DimensionError("adam_step: optimizer state " + state.m.shape() + " vs param " +
                         param.shape());
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// Central-difference gradient of a scalar function f at x.
template <typename F>
Matrix finite_diff_grad(F&& f, const Matrix& x, double h = 1e-5) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(static_cast<const Matrix&>(probe));
    probe[i] = orig - h;
    const double down = f(static_cast<const Matrix&>(probe));
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(frobenius_norm(a), frobenius_norm(b));
  if (scale == 0.0) return 0.0;
  return frobenius_norm(a - b) / scale;
}

}  // namespace pan
