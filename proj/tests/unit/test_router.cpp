#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cret/error.hpp"
#include "cret/router.hpp"
#include "cret/synth.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cret;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_SUITE("router") {

TEST_CASE("single script routes with probability one") {
  Rng rng(1);
  const RouterParams p = router_init(8, 16, 1, 3);
  for (int t = 0; t < 10; ++t) {
    const Vector probs = route_probs(oracle::random_vector(8, rng, 3.0), p);
    REQUIRE(probs.size() == 1);
    CHECK(probs[0] == 1.0);
  }
}

TEST_CASE("zero head gives a uniform distribution") {
  RouterParams p = router_init(8, 16, 4, 3);
  p.w_head.setZero();
  p.b_head.setZero();
  Rng rng(2);
  const Vector probs = route_probs(oracle::random_vector(8, rng), p);
  for (Eigen::Index j = 0; j < 4; ++j) CHECK(probs[j] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("probabilities sum to one") {
  Rng rng(3);
  const RouterParams p = router_init(8, kRouterHidden, 6, 5);
  for (int t = 0; t < 50; ++t) {
    const Vector probs = route_probs(oracle::random_vector(8, rng, 10.0), p);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-6);
    CHECK(probs.minCoeff() >= 0.0);
  }
}

TEST_CASE("route_select") {
  CHECK(route_select(vec({0.2, 0.7, 0.1})) == 1);
  CHECK(route_select(vec({0.5, 0.5})) == 0);
  CHECK(route_select(vec({1.0})) == 0);
  CHECK(route_select(vec({0.1, 0.45, 0.45})) == 1);
}

TEST_CASE("selection is invariant to monotone transforms of the logits") {
  Rng rng(4);
  const RouterParams p = router_init(8, 32, 5, 7);
  for (int t = 0; t < 50; ++t) {
    const Vector logits = router_logits(oracle::random_vector(8, rng, 2.0), p);
    const int k = route_select(softmax(logits));
    CHECK(route_select(logits) == k);
    CHECK(route_select(Vector(logits.array().exp())) == k);
    CHECK(route_select(Vector((3.0 * logits.array() - 7.0).tanh())) == k);
  }
}

TEST_CASE("cross-entropy values") {
  SUBCASE("certain prediction costs nothing") {
    RouterParams p = router_init(4, 8, 2, 0);
    p.w_head.setZero();
    p.b_head << 800.0, 0.0;
    CHECK(router_ce_loss(Vector::Ones(4), 0, p).loss == doctest::Approx(0.0));
  }
  SUBCASE("uniform over four scripts") {
    RouterParams p = router_init(4, 8, 4, 0);
    p.w_head.setZero();
    p.b_head.setZero();
    CHECK(std::abs(router_ce_loss(Vector::Ones(4), 2, p).loss - std::log(4.0)) < 1e-12);
  }
  SUBCASE("label out of range") {
    const RouterParams p = router_init(4, 8, 2, 0);
    CHECK_THROWS_AS(router_ce_loss(Vector::Ones(4), 2, p), InvalidInput);
    CHECK_THROWS_AS(router_ce_loss(Vector::Ones(4), -1, p), InvalidInput);
    CHECK_THROWS_AS(router_ce_loss_batch(Matrix::Ones(2, 4), {0, 5}, p), InvalidInput);
  }
  SUBCASE("dimension mismatch") {
    const RouterParams p = router_init(4, 8, 2, 0);
    CHECK_THROWS_AS(route_probs(Vector::Ones(5), p), InvalidInput);
  }
}

TEST_CASE("gradients match finite differences over 100 seeds") {
  double single = 0.0, batch = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    single = std::max(single, gradcheck::router(s, 16));
    batch = std::max(batch, gradcheck::router_batch(s, 16));
  }
  INFO("single " << single << " batch " << batch);
  CHECK(single < gradcheck::kTolerance);
  CHECK(batch < gradcheck::kTolerance);
}

TEST_CASE("router_grow") {
  const RouterParams one = router_init(8, 16, 1, 11);
  const RouterParams two = router_grow(one, 2, 5);
  CHECK(two.num_scripts() == 2);
  CHECK(route_probs(Vector::Ones(8), two).size() == 2);
  CHECK(two.w_trunk == one.w_trunk);
  CHECK(two.b_trunk == one.b_trunk);
  CHECK(router_grow(one, 2, 5) == two);
  CHECK_FALSE(router_grow(one, 2, 6) == two);
  CHECK_THROWS_AS(router_grow(one, 3, 5), InvalidInput);
  CHECK_THROWS_AS(router_grow(two, 2, 5), InvalidInput);
}

TEST_CASE("a trained router separates three synthetic scripts") {
  SynthConfig c;
  c.scripts = {"CS", "WSC", "SAC"};
  c.script_strength = 1.0;
  c.script_rank = 32;
  c.script_offset = 2.0;
  c.nuisance_scale = 10.0;
  c.noise_scale = 1.0;
  c.mode_scale = 3.0;
  c.seed = 3;
  const SynthDataset ds = generate(c);

  std::vector<Vector> train, test;
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
    const Record& r = ds.manifest.records[i];
    if (r.kind != Modality::Image || r.split == Split::ZeroShot) continue;
    const int y = static_cast<int>(std::find(c.scripts.begin(), c.scripts.end(), r.script) - c.scripts.begin());
    (r.split == Split::Train ? train : test).push_back(ds.embeddings[i].values);
    (r.split == Split::Train ? train_y : test_y).push_back(y);
  }

  RouterParams p = router_init(c.dim, kRouterHidden, 3, 17);
  AdamWState opt;
  Rng rng(9);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < 10; ++epoch) {
    rng.shuffle(order);
    for (std::size_t s = 0; s < order.size(); s += 32) {
      const std::size_t e = std::min(order.size(), s + 32);
      Matrix feats(static_cast<Eigen::Index>(e - s), c.dim);
      std::vector<int> labels;
      for (std::size_t k = s; k < e; ++k) {
        feats.row(static_cast<Eigen::Index>(k - s)) = train[order[k]].transpose();
        labels.push_back(train_y[order[k]]);
      }
      adamw_step(p.tensors(), router_ce_loss_batch(feats, labels, p).grads.tensors(), opt, 3e-3);
    }
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hit += route_select(route_probs(test[i], p)) == test_y[i];
  const double acc = static_cast<double>(hit) / static_cast<double>(test.size());
  INFO("held-out routing accuracy " << acc << " on " << test.size());
  CHECK(acc >= 0.95);
}

}  // TEST_SUITE
