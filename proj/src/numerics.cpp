#include "cret/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cret/error.hpp"

namespace cret {

namespace {

void require_same(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw InvalidInput(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
  }
}

struct Moments {
  double mean;
  double inv_std;
};

Moments moments(const Vector& x, double eps) {
  const double d = static_cast<double>(x.size());
  const double mean = x.sum() / d;
  const double var = (x.array() - mean).square().sum() / d;
  if (!(var + eps > 0.0)) throw DegenerateInput("layer_norm: zero variance with eps = 0");
  return {mean, 1.0 / std::sqrt(var + eps)};
}

}  // namespace

Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, double eps) {
  require_same(x.size(), gain.size(), "layer_norm gain");
  require_same(x.size(), bias.size(), "layer_norm bias");
  if (x.size() == 0) throw InvalidInput("layer_norm: empty input");
  if (eps < 0.0) throw InvalidInput("layer_norm: eps must be non-negative");
  const auto [mean, inv_std] = moments(x, eps);
  return gain.array() * ((x.array() - mean) * inv_std) + bias.array();
}

LayerNormGrads layer_norm_backward(const Vector& x, const Vector& gain, const Vector& bias,
                                   const Vector& upstream, double eps) {
  require_same(x.size(), gain.size(), "layer_norm_backward gain");
  require_same(x.size(), bias.size(), "layer_norm_backward bias");
  require_same(x.size(), upstream.size(), "layer_norm_backward upstream");
  const double d = static_cast<double>(x.size());
  const auto [mean, inv_std] = moments(x, eps);
  const Vector xhat = (x.array() - mean) * inv_std;
  const Vector dxhat = upstream.cwiseProduct(gain);
  LayerNormGrads g;
  g.grad_x = (inv_std / d) *
             (d * dxhat.array() - dxhat.sum() - xhat.array() * dxhat.dot(xhat)).matrix();
  g.grad_gain = upstream.cwiseProduct(xhat);
  g.grad_bias = upstream;
  return g;
}

LayerNormBatchGrads layer_norm_backward(const Matrix& x, const Vector& gain, const Vector& bias,
                                        const Matrix& upstream, double eps) {
  require_same(x.rows(), upstream.rows(), "layer_norm_backward batch");
  require_same(x.cols(), upstream.cols(), "layer_norm_backward batch");
  LayerNormBatchGrads out;
  out.grad_x.resize(x.rows(), x.cols());
  out.grad_gain = Vector::Zero(gain.size());
  out.grad_bias = Vector::Zero(bias.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    const Vector ui = upstream.row(i).transpose();
    auto g = layer_norm_backward(xi, gain, bias, ui, eps);
    out.grad_x.row(i) = g.grad_x.transpose();
    out.grad_gain += g.grad_gain;
    out.grad_bias += g.grad_bias;
  }
  return out;
}

Vector sigmoid(const Vector& a) {
  return a.unaryExpr([](double v) {
    // Split on sign so exp never overflows.
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Vector swiglu_gate(const Vector& a, const Vector& b) {
  require_same(a.size(), b.size(), "swiglu_gate");
  return sigmoid(a).cwiseProduct(b);
}

Vector l2_normalize(const Vector& x) {
  const double n = x.norm();
  if (!(n > 0.0)) throw DegenerateInput("l2_normalize: zero vector");
  return x / n;
}

Vector l2_normalize_backward(const Vector& x, const Vector& upstream) {
  require_same(x.size(), upstream.size(), "l2_normalize_backward");
  const double n = x.norm();
  if (!(n > 0.0)) throw DegenerateInput("l2_normalize_backward: zero vector");
  const Vector y = x / n;
  return (upstream - y * y.dot(upstream)) / n;
}

double cosine_sim(const Vector& u, const Vector& v) {
  require_same(u.size(), v.size(), "cosine_sim");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw DegenerateInput("cosine_sim: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw InvalidInput("softmax: empty input");
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const Matrix& m) { return m.allFinite(); }

void adamw_step(const ParamRefs& params, const GradRefs& grads, AdamWState& state, double lr) {
  if (params.size() != grads.size()) throw InvalidInput("adamw_step: tensor count mismatch");
  if (lr < 0.0) throw InvalidInput("adamw_step: negative learning rate");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size()) throw InvalidInput("adamw_step: tensor shape mismatch");
    for (double g : grads[t]) {
      if (!std::isfinite(g)) throw TrainingAbort("adamw_step: non-finite gradient");
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  } else if (state.first_moment.size() != params.size()) {
    throw InvalidInput("adamw_step: optimizer state tracks a different parameter set");
  }

  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * c.weight_decay;

  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    if (m.size() != params[t].size()) throw InvalidInput("adamw_step: moment shape mismatch");
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double g = grads[t][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[t][i] = params[t][i] * decay - lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double CosineSchedule::lr_at(std::int64_t step, double base_lr) const {
  if (total_steps <= 0) throw InvalidInput("lr_at: total_steps must be positive");
  if (step < 0 || step > total_steps) throw InvalidInput("lr_at: step out of range");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0) throw InvalidInput("lr_at: warmup_ratio outside [0,1]");
  const double total = static_cast<double>(total_steps);
  const double warm = warmup_ratio * total;
  const double s = static_cast<double>(step);
  if (s < warm) return base_lr * s / warm;
  if (warm >= total) return base_lr;
  const double progress = (s - warm) / (total - warm);
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

double finite_diff_check(const ScalarFn& f, std::span<const double> params,
                         std::span<const double> analytic, double h) {
  if (params.size() != analytic.size()) throw InvalidInput("finite_diff_check: size mismatch");
  std::vector<double> p(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(p);
    p[i] = orig - h;
    const double fm = f(p);
    p[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace cret
