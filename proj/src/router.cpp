#include "cret/router.hpp"

#include <cmath>
#include <string>

#include "cret/error.hpp"
#include "cret/rng.hpp"

namespace cret {

namespace {

void fill_normal(Matrix& m, double scale, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
}

Matrix draw_head(Eigen::Index rows, Eigen::Index hidden, std::uint64_t seed) {
  Rng rng(seed);
  Matrix w(rows, hidden);
  fill_normal(w, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  return w;
}

}  // namespace

ParamRefs RouterParams::tensors() {
  return {as_span(w_trunk), as_span(b_trunk), as_span(w_head), as_span(b_head)};
}

void RouterParams::validate() const {
  if (w_trunk.rows() == 0 || w_trunk.cols() == 0) throw InvalidInput("router: empty trunk");
  if (b_trunk.size() != w_trunk.rows() || w_head.cols() != w_trunk.rows() ||
      b_head.size() != w_head.rows()) {
    throw InvalidInput("router: inconsistent parameter shapes");
  }
  if (w_head.rows() == 0) throw InvalidInput("router: head has no outputs");
}

RouterGrads RouterGrads::zeros_like(const RouterParams& p) {
  return {Matrix::Zero(p.w_trunk.rows(), p.w_trunk.cols()), Vector::Zero(p.b_trunk.size()),
          Matrix::Zero(p.w_head.rows(), p.w_head.cols()), Vector::Zero(p.b_head.size())};
}

RouterGrads& RouterGrads::operator+=(const RouterGrads& o) {
  w_trunk += o.w_trunk;
  b_trunk += o.b_trunk;
  w_head += o.w_head;
  b_head += o.b_head;
  return *this;
}

GradRefs RouterGrads::tensors() const {
  return {as_span(w_trunk), as_span(b_trunk), as_span(w_head), as_span(b_head)};
}

RouterParams router_init(Eigen::Index dim, Eigen::Index hidden, Eigen::Index num_scripts,
                         std::uint64_t seed) {
  if (dim <= 0 || hidden <= 0 || num_scripts <= 0) throw InvalidInput("router_init: invalid sizes");
  Rng rng(seed);
  RouterParams p;
  p.w_trunk.resize(hidden, dim);
  fill_normal(p.w_trunk, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  p.b_trunk = Vector::Zero(hidden);
  p.w_head = draw_head(num_scripts, hidden, rng.next_u64());
  p.b_head = Vector::Zero(num_scripts);
  return p;
}

RouterParams router_grow(const RouterParams& params, Eigen::Index new_t, std::uint64_t seed) {
  if (new_t != params.num_scripts() + 1) {
    throw InvalidInput("router_grow: head can only grow by one script (have " +
                       std::to_string(params.num_scripts()) + ", asked " + std::to_string(new_t) +
                       ")");
  }
  RouterParams out;
  out.w_trunk = params.w_trunk;
  out.b_trunk = params.b_trunk;
  out.w_head = draw_head(new_t, params.hidden(), seed);
  out.b_head = Vector::Zero(new_t);
  return out;
}

Vector router_logits(const Vector& e, const RouterParams& params) {
  if (e.size() != params.dim()) {
    throw InvalidInput("router: expected dim " + std::to_string(params.dim()) + ", got " +
                       std::to_string(e.size()));
  }
  const Vector hidden = (params.w_trunk * e + params.b_trunk).array().tanh().matrix();
  return params.w_head * hidden + params.b_head;
}

Vector route_probs(const Vector& e, const RouterParams& params) {
  return softmax(router_logits(e, params));
}

int route_select(const Vector& p) {
  if (p.size() == 0) throw InvalidInput("route_select: empty distribution");
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < p.size(); ++j) {
    if (p[j] > p[best]) best = j;
  }
  return static_cast<int>(best);
}

RouterLoss router_ce_loss(const Vector& e, int true_script, const RouterParams& params) {
  if (true_script < 0 || true_script >= params.num_scripts()) {
    throw InvalidInput("router_ce_loss: script index " + std::to_string(true_script) +
                       " out of range");
  }
  if (e.size() != params.dim()) throw InvalidInput("router_ce_loss: dimension mismatch");
  const Vector hidden = (params.w_trunk * e + params.b_trunk).array().tanh().matrix();
  const Vector logits = params.w_head * hidden + params.b_head;
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());

  RouterLoss out;
  out.loss = lse - logits[true_script];
  Vector dlogits = (logits.array() - lse).exp().matrix();
  dlogits[true_script] -= 1.0;
  out.grads.w_head = dlogits * hidden.transpose();
  out.grads.b_head = dlogits;
  const Vector dpre =
      (params.w_head.transpose() * dlogits).cwiseProduct((1.0 - hidden.array().square()).matrix());
  out.grads.w_trunk = dpre * e.transpose();
  out.grads.b_trunk = dpre;
  return out;
}

RouterLoss router_ce_loss_batch(const Matrix& features, const std::vector<int>& true_scripts,
                                const RouterParams& params) {
  const Eigen::Index n = features.rows();
  if (n == 0 || static_cast<std::size_t>(n) != true_scripts.size()) {
    throw InvalidInput("router_ce_loss_batch: need one label per feature row");
  }
  if (features.cols() != params.dim()) throw InvalidInput("router_ce_loss_batch: dimension mismatch");
  for (int s : true_scripts) {
    if (s < 0 || s >= params.num_scripts()) {
      throw InvalidInput("router_ce_loss_batch: script index " + std::to_string(s) + " out of range");
    }
  }
  // Column-per-sample layout throughout.
  const Matrix hidden =
      ((params.w_trunk * features.transpose()).colwise() + params.b_trunk).array().tanh().matrix();
  Matrix dlogits = (params.w_head * hidden).colwise() + params.b_head;
  RouterLoss out;
  const double inv = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto col = dlogits.col(i);
    const double m = col.maxCoeff();
    const double lse = m + std::log((col.array() - m).exp().sum());
    out.loss += (lse - col[true_scripts[i]]) * inv;
    col = ((col.array() - lse).exp() * inv).matrix();
    col[true_scripts[i]] -= inv;
  }
  out.grads.w_head = dlogits * hidden.transpose();
  out.grads.b_head = dlogits.rowwise().sum();
  const Matrix dpre =
      (params.w_head.transpose() * dlogits).cwiseProduct((1.0 - hidden.array().square()).matrix());
  out.grads.w_trunk = dpre * features;
  out.grads.b_trunk = dpre.rowwise().sum();
  return out;
}

}  // namespace cret
