#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cret {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLayerNormEps = 1e-5;

/// Tolerance of every unit-norm precondition.
inline constexpr double kUnitNormTol = 1e-5;

// ---------------------------------------------------------------------------
// Differentiable primitives
// ---------------------------------------------------------------------------

/// gain * (x - mean) / sqrt(var + eps) + bias, population variance.
Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias,
                  double eps = kLayerNormEps);

struct LayerNormGrads {
  Vector grad_x;
  Vector grad_gain;
  Vector grad_bias;
};

LayerNormGrads layer_norm_backward(const Vector& x, const Vector& gain, const Vector& bias,
                                   const Vector& upstream, double eps = kLayerNormEps);

struct LayerNormBatchGrads {
  Matrix grad_x;  // one row per sample
  Vector grad_gain;
  Vector grad_bias;
};

/// Batched variant: rows of `x` and `upstream` are samples; affine
/// gradients are summed over the batch.
LayerNormBatchGrads layer_norm_backward(const Matrix& x, const Vector& gain, const Vector& bias,
                                        const Matrix& upstream, double eps = kLayerNormEps);

Vector sigmoid(const Vector& a);

/// sigmoid(a) ⊙ b
Vector swiglu_gate(const Vector& a, const Vector& b);

Vector l2_normalize(const Vector& x);

/// Vector-Jacobian product of l2_normalize at `x`.
Vector l2_normalize_backward(const Vector& x, const Vector& upstream);

double cosine_sim(const Vector& u, const Vector& v);

/// Numerically stable softmax.
Vector softmax(const Vector& logits);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

/// Mutable views over the storage of each parameter tensor of a model.
using ParamRefs = std::vector<std::span<double>>;
using GradRefs = std::vector<std::span<const double>>;

inline std::span<double> as_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<double> as_span(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<const double> as_span(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

struct AdamWConfig {
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  AdamWConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One AdamW update with decoupled weight decay. Moments are lazily sized on
/// the first call; later calls must pass the same tensor shapes.
/// Throws TrainingAbort on non-finite gradients (parameters untouched).
void adamw_step(const ParamRefs& params, const GradRefs& grads, AdamWState& state, double lr);

/// Linear warmup followed by cosine decay to zero.
struct CosineSchedule {
  double warmup_ratio = 0.01;
  std::int64_t total_steps = 1;

  double lr_at(std::int64_t step, double base_lr) const;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

using ScalarFn = std::function<double(std::span<const double>)>;

/// max_i |analytic_i - fd_i| / max(1, |fd_i|) with central differences of step h.
double finite_diff_check(const ScalarFn& f, std::span<const double> params,
                         std::span<const double> analytic, double h = 1e-5);

}  // namespace cret
