#pragma once

#include <cstdint>
#include <vector>

#include "cret/numerics.hpp"

namespace cret {

inline constexpr Eigen::Index kRouterHidden = 256;

/// One-hidden-layer tanh MLP over the frozen visual feature, producing a
/// distribution over the adapters onboarded so far.
struct RouterParams {
  Matrix w_trunk;  // H x D
  Vector b_trunk;  // H
  Matrix w_head;   // t x H
  Vector b_head;   // t

  Eigen::Index dim() const { return w_trunk.cols(); }
  Eigen::Index hidden() const { return w_trunk.rows(); }
  Eigen::Index num_scripts() const { return w_head.rows(); }

  ParamRefs tensors();
  void validate() const;

  bool operator==(const RouterParams&) const = default;
};

struct RouterGrads {
  Matrix w_trunk;
  Vector b_trunk;
  Matrix w_head;
  Vector b_head;

  static RouterGrads zeros_like(const RouterParams& p);
  RouterGrads& operator+=(const RouterGrads& o);
  GradRefs tensors() const;
};

RouterParams router_init(Eigen::Index dim, Eigen::Index hidden, Eigen::Index num_scripts,
                         std::uint64_t seed);

/// Keeps the trunk and draws a fresh head with `new_t` outputs.
/// `new_t` must be exactly one more than the current head width.
RouterParams router_grow(const RouterParams& params, Eigen::Index new_t, std::uint64_t seed);

Vector router_logits(const Vector& e, const RouterParams& params);
Vector route_probs(const Vector& e, const RouterParams& params);

/// argmax with ties resolved to the lowest index.
int route_select(const Vector& p);

struct RouterLoss {
  double loss = 0.0;
  RouterGrads grads;
};

/// -log p[true_script]. The input feature is treated as a constant.
RouterLoss router_ce_loss(const Vector& e, int true_script, const RouterParams& params);

/// Mean of router_ce_loss over the rows of `features`, gradients included.
RouterLoss router_ce_loss_batch(const Matrix& features, const std::vector<int>& true_scripts,
                                const RouterParams& params);

}  // namespace cret
