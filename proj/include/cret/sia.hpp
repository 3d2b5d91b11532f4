#pragma once

#include <cstdint>

#include "cret/numerics.hpp"

namespace cret {

/// Per-script low-rank gated residual adapter:
///
///   h  = LN(e)
///   a  = W1 h,  b = W2 h
///   z  = sigmoid(a) ⊙ b
///   e' = e + alpha * W_up z
///
/// W1, W2 are r x D, W_up is D x r, r < D.
struct SiaParams {
  int script_id = 0;
  Vector ln_gain;
  Vector ln_bias;
  Matrix w1;
  Matrix w2;
  Matrix w_up;
  double alpha = 0.5;

  Eigen::Index dim() const { return ln_gain.size(); }
  Eigen::Index rank() const { return w1.rows(); }

  /// Views in a fixed order: ln_gain, ln_bias, w1, w2, w_up, alpha.
  ParamRefs tensors();

  /// Throws InvalidInput if shapes are inconsistent or r >= D.
  void validate() const;

  bool operator==(const SiaParams&) const = default;
};

/// Gradients with the same layout as SiaParams.
struct SiaGrads {
  Vector ln_gain;
  Vector ln_bias;
  Matrix w1;
  Matrix w2;
  Matrix w_up;
  double alpha = 0.0;

  static SiaGrads zeros_like(const SiaParams& p);
  SiaGrads& operator+=(const SiaGrads& o);
  GradRefs tensors() const;
};

struct SiaBackward;
class SiaTape;
SiaBackward sia_backward(const Vector& upstream, SiaTape& tape, const SiaParams& params);

/// Forward intermediates kept for exactly one backward call.
class SiaTape {
 public:
  Vector e, h, a, b, gate, z, delta;

  bool consumed() const { return consumed_; }

 private:
  friend SiaBackward sia_backward(const Vector&, SiaTape&, const SiaParams&);
  bool consumed_ = false;
};

struct SiaForward {
  Vector e_prime;
  SiaTape tape;
};

struct SiaBackward {
  Vector grad_e;
  SiaGrads grads;
};

SiaParams sia_init(Eigen::Index dim, Eigen::Index rank, std::uint64_t seed, double alpha = 0.5,
                   int script_id = 0);

SiaForward sia_forward(const Vector& e, const SiaParams& params);

/// Output only, no tape.
Vector sia_apply(const Vector& e, const SiaParams& params);

/// Throws ProtocolError if the tape was already consumed.
SiaBackward sia_backward(const Vector& upstream, SiaTape& tape, const SiaParams& params);

}  // namespace cret
