#include <doctest.h>

#include "cret/error.hpp"
#include "cret/sia.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cret;

TEST_SUITE("sia") {

TEST_CASE("zero up-projection or zero alpha is the identity") {
  Rng rng(5);
  SiaParams p = sia_init(8, 3, 1);
  p.ln_gain = oracle::random_vector(8, rng);
  p.w1 = oracle::random_matrix(3, 8, rng);
  const Vector e = oracle::random_vector(8, rng, 4.0);
  CHECK(sia_apply(e, p) == e);

  p.w_up = oracle::random_matrix(8, 3, rng);
  p.alpha = 0.0;
  CHECK(sia_apply(e, p) == e);
}

TEST_CASE("D=4, r=2 hand-filled weights against a scalar evaluation") {
  SiaParams p = sia_init(4, 2, 0);
  p.ln_gain << 1.0, 0.5, -1.0, 2.0;
  p.ln_bias << 0.1, 0.0, -0.2, 0.3;
  p.w1 << 0.2, -0.1, 0.4, 0.0,
          -0.3, 0.5, 0.1, 0.2;
  p.w2 << 0.1, 0.1, -0.2, 0.3,
          0.0, -0.4, 0.2, 0.1;
  p.w_up << 1.0, 0.0,
            0.5, -0.5,
            0.0, 2.0,
            -1.0, 1.0;
  p.alpha = 0.5;
  Vector e(4);
  e << 1.0, 0.0, 0.0, 0.0;

  const auto ref = oracle::sia_forward(
      {1, 0, 0, 0}, {1.0, 0.5, -1.0, 2.0}, {0.1, 0.0, -0.2, 0.3},
      {{0.2, -0.1, 0.4, 0.0}, {-0.3, 0.5, 0.1, 0.2}},
      {{0.1, 0.1, -0.2, 0.3}, {0.0, -0.4, 0.2, 0.1}},
      {{1.0, 0.0}, {0.5, -0.5}, {0.0, 2.0}, {-1.0, 1.0}}, 0.5, kLayerNormEps);
  const Vector out = sia_apply(e, p);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(out[i] - ref[i]) < 1e-12);
  CHECK(out != e);
}

TEST_CASE("zero upstream gives zero gradients") {
  Rng rng(2);
  SiaParams p = sia_init(8, 3, 9);
  p.w_up = oracle::random_matrix(8, 3, rng);
  SiaForward fw = sia_forward(oracle::random_vector(8, rng), p);
  const SiaBackward bw = sia_backward(Vector::Zero(8), fw.tape, p);
  CHECK(bw.grad_e.isZero(0.0));
  for (auto s : bw.grads.tensors())
    for (double v : s) CHECK(v == 0.0);
}

TEST_CASE("gradients match finite differences over 100 seeds") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) worst = std::max(worst, gradcheck::sia(s));
  INFO("worst relative error " << worst);
  CHECK(worst < gradcheck::kTolerance);
}

TEST_CASE("grad_alpha is the upstream dot the residual") {
  Rng rng(21);
  SiaParams p = sia_init(6, 2, 4);
  p.w_up = oracle::random_matrix(6, 2, rng);
  const Vector e = oracle::random_vector(6, rng);
  const Vector up = oracle::random_vector(6, rng);
  SiaForward fw = sia_forward(e, p);
  const Vector delta = fw.tape.delta;
  const double ga = sia_backward(up, fw.tape, p).grads.alpha;
  CHECK(ga == doctest::Approx(up.dot(delta)).epsilon(1e-14));
  // residual is linear in alpha, so the central difference is exact up to rounding
  SiaParams hi = p, lo = p;
  hi.alpha += 1e-3;
  lo.alpha -= 1e-3;
  const double fd = (sia_apply(e, hi).dot(up) - sia_apply(e, lo).dot(up)) / 2e-3;
  CHECK(std::abs(fd - ga) < 1e-9);
}

TEST_CASE("tape is single use") {
  SiaParams p = sia_init(5, 2, 0);
  SiaForward fw = sia_forward(Vector::LinSpaced(5, -1, 1), p);
  sia_backward(Vector::Ones(5), fw.tape, p);
  CHECK(fw.tape.consumed());
  CHECK_THROWS_AS(sia_backward(Vector::Ones(5), fw.tape, p), ProtocolError);
}

TEST_CASE("sia_init") {
  SUBCASE("fresh adapter is an exact identity") {
    Rng rng(8);
    for (int t = 0; t < 30; ++t) {
      const auto d = static_cast<Eigen::Index>(2 + rng.below(60));
      const auto r = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::size_t>(d - 1)));
      const SiaParams p = sia_init(d, r, rng.next_u64());
      const Vector e = oracle::random_vector(d, rng, 3.0);
      CHECK(sia_apply(e, p) == e);
      CHECK(p.alpha == 0.5);
      CHECK(p.ln_gain == Vector::Ones(d));
      CHECK(p.ln_bias.isZero(0.0));
    }
  }
  SUBCASE("deterministic per seed") {
    CHECK(sia_init(64, 16, 123) == sia_init(64, 16, 123));
    CHECK_FALSE(sia_init(64, 16, 123) == sia_init(64, 16, 124));
  }
  SUBCASE("projection scale is about 1/sqrt(D)") {
    const SiaParams p = sia_init(64, 32, 3);
    const double rms = std::sqrt(p.w1.squaredNorm() / static_cast<double>(p.w1.size()));
    CHECK(rms == doctest::Approx(0.125).epsilon(0.1));
    CHECK(std::abs(p.w1.mean()) < 0.01);
  }
  SUBCASE("rank must be below dim") {
    CHECK_THROWS_AS(sia_init(64, 64, 0), InvalidInput);
    CHECK_THROWS_AS(sia_init(4, 0, 0), InvalidInput);
  }
}

TEST_CASE("dimension mismatch") {
  const SiaParams p = sia_init(6, 2, 0);
  CHECK_THROWS_AS(sia_forward(Vector::Ones(5), p), InvalidInput);
  SiaForward fw = sia_forward(Vector::LinSpaced(6, 0, 1), p);
  CHECK_THROWS_AS(sia_backward(Vector::Ones(3), fw.tape, p), InvalidInput);
}

TEST_CASE("forward is deterministic") {
  Rng rng(4);
  SiaParams p = sia_init(16, 4, 2);
  p.w_up = oracle::random_matrix(16, 4, rng);
  const Vector e = oracle::random_vector(16, rng);
  CHECK(sia_apply(e, p) == sia_apply(e, p));
}

}  // TEST_SUITE
