#include "cret/sia.hpp"

#include <cmath>
#include <string>

#include "cret/error.hpp"
#include "cret/rng.hpp"

namespace cret {

ParamRefs SiaParams::tensors() {
  return {as_span(ln_gain), as_span(ln_bias), as_span(w1), as_span(w2), as_span(w_up),
          std::span<double>(&alpha, 1)};
}

void SiaParams::validate() const {
  const auto d = dim();
  const auto r = rank();
  if (d <= 0 || r <= 0) throw InvalidInput("SIA: empty dimensions");
  if (r >= d) throw InvalidInput("SIA: rank must be smaller than the embedding dimension");
  if (ln_bias.size() != d || w1.cols() != d || w2.rows() != r || w2.cols() != d ||
      w_up.rows() != d || w_up.cols() != r) {
    throw InvalidInput("SIA: inconsistent parameter shapes");
  }
  if (!ln_gain.allFinite() || !ln_bias.allFinite() || !w1.allFinite() || !w2.allFinite() ||
      !w_up.allFinite() || !std::isfinite(alpha)) {
    throw InvalidInput("SIA: non-finite parameter");
  }
}

SiaGrads SiaGrads::zeros_like(const SiaParams& p) {
  SiaGrads g;
  g.ln_gain = Vector::Zero(p.ln_gain.size());
  g.ln_bias = Vector::Zero(p.ln_bias.size());
  g.w1 = Matrix::Zero(p.w1.rows(), p.w1.cols());
  g.w2 = Matrix::Zero(p.w2.rows(), p.w2.cols());
  g.w_up = Matrix::Zero(p.w_up.rows(), p.w_up.cols());
  g.alpha = 0.0;
  return g;
}

SiaGrads& SiaGrads::operator+=(const SiaGrads& o) {
  ln_gain += o.ln_gain;
  ln_bias += o.ln_bias;
  w1 += o.w1;
  w2 += o.w2;
  w_up += o.w_up;
  alpha += o.alpha;
  return *this;
}

GradRefs SiaGrads::tensors() const {
  return {as_span(ln_gain), as_span(ln_bias), as_span(w1), as_span(w2), as_span(w_up),
          std::span<const double>(&alpha, 1)};
}

SiaParams sia_init(Eigen::Index dim, Eigen::Index rank, std::uint64_t seed, double alpha,
                   int script_id) {
  if (dim <= 0 || rank <= 0 || rank >= dim) {
    throw InvalidInput("sia_init: need 0 < rank < dim (got rank " + std::to_string(rank) +
                       ", dim " + std::to_string(dim) + ")");
  }
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  SiaParams p;
  p.script_id = script_id;
  p.ln_gain = Vector::Ones(dim);
  p.ln_bias = Vector::Zero(dim);
  p.w1.resize(rank, dim);
  p.w2.resize(rank, dim);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = scale * rng.normal();
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = scale * rng.normal();
  p.w_up = Matrix::Zero(dim, rank);
  p.alpha = alpha;
  return p;
}

SiaForward sia_forward(const Vector& e, const SiaParams& params) {
  if (e.size() != params.dim()) {
    throw InvalidInput("sia_forward: expected dim " + std::to_string(params.dim()) + ", got " +
                       std::to_string(e.size()));
  }
  SiaForward out;
  auto& t = out.tape;
  t.e = e;
  t.h = layer_norm(e, params.ln_gain, params.ln_bias);
  t.a = params.w1 * t.h;
  t.b = params.w2 * t.h;
  t.gate = sigmoid(t.a);
  t.z = t.gate.cwiseProduct(t.b);
  t.delta = params.w_up * t.z;
  out.e_prime = e + params.alpha * t.delta;
  return out;
}

Vector sia_apply(const Vector& e, const SiaParams& params) {
  return sia_forward(e, params).e_prime;
}

SiaBackward sia_backward(const Vector& upstream, SiaTape& tape, const SiaParams& params) {
  if (tape.consumed()) throw ProtocolError("sia_backward: tape already consumed");
  if (upstream.size() != params.dim() || tape.e.size() != params.dim()) {
    throw InvalidInput("sia_backward: dimension mismatch");
  }
  tape.consumed_ = true;

  SiaBackward out;
  auto& g = out.grads;
  g.alpha = upstream.dot(tape.delta);
  const Vector d_delta = params.alpha * upstream;
  g.w_up = d_delta * tape.z.transpose();
  const Vector dz = params.w_up.transpose() * d_delta;
  const Vector da =
      dz.cwiseProduct(tape.b).cwiseProduct(tape.gate.cwiseProduct(Vector::Ones(tape.gate.size()) - tape.gate));
  const Vector db = dz.cwiseProduct(tape.gate);
  g.w1 = da * tape.h.transpose();
  g.w2 = db * tape.h.transpose();
  const Vector dh = params.w1.transpose() * da + params.w2.transpose() * db;
  auto ln = layer_norm_backward(tape.e, params.ln_gain, params.ln_bias, dh);
  g.ln_gain = std::move(ln.grad_gain);
  g.ln_bias = std::move(ln.grad_bias);
  out.grad_e = upstream + ln.grad_x;
  return out;
}

}  // namespace cret
