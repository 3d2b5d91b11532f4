#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "cret/error.hpp"
#include "cret/synth.hpp"
#include "oracles.hpp"

using namespace cret;

namespace {

EmbeddingRecord rec(std::string id, Modality kind, Vector v) {
  EmbeddingRecord r;
  r.id = std::move(id);
  r.kind = kind;
  r.values = std::move(v);
  return r;
}

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.dim = 16;
  c.scripts = {"CS", "WSC"};
  c.chars_per_script = 10;
  c.char_pool = 15;
  c.zero_shot_chars = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("provider") {

TEST_CASE("identity post map only normalizes") {
  const PostMap p = PostMap::identity(4);
  Vector v(4);
  v << 3, 0, 4, 0;
  CHECK((p.apply(v) - v / 5.0).norm() < 1e-15);
  CHECK(p.is_identity());
  CHECK_THROWS_AS(p.apply(Vector::Zero(4)), DegenerateInput);
  CHECK_THROWS_AS(p.apply(Vector::Ones(3)), InvalidInput);
}

TEST_CASE("orthogonal post map preserves cosine") {
  const PostMap p = PostMap::orthogonal(12, 5);
  CHECK((p.matrix().transpose() * p.matrix() - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-12);
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Vector a = oracle::random_vector(12, rng), b = oracle::random_vector(12, rng);
    const double before = a.normalized().dot(b.normalized());
    CHECK(std::abs(p.apply(a).dot(p.apply(b)) - before) < 1e-12);
    CHECK(std::abs(p.apply(a).norm() - 1.0) < 1e-12);
  }
  CHECK(PostMap::orthogonal(12, 5).matrix() == p.matrix());
}

TEST_CASE("post map backward matches finite differences") {
  const PostMap p = PostMap::orthogonal(6, 2);
  Rng rng(3);
  const Vector v = oracle::random_vector(6, rng), up = oracle::random_vector(6, rng);
  const Vector g = p.backward(v, up);
  for (Eigen::Index i = 0; i < 6; ++i) {
    Vector hi = v, lo = v;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    const double fd = (p.apply(hi).dot(up) - p.apply(lo).dot(up)) / 2e-6;
    CHECK(std::abs(fd - g[i]) < 1e-7);
  }
}

TEST_CASE("provider validation") {
  const PostMap pm = PostMap::identity(3);
  Vector unit3 = Vector::Zero(3);
  unit3[0] = 1.0;
  SUBCASE("lookups") {
    EmbedProvider p({rec("i", Modality::Image, Vector::Ones(3)), rec("t", Modality::Meaning, unit3)}, pm);
    CHECK(p.size() == 2);
    CHECK(p.visual_features("i") == Vector::Ones(3));
    CHECK(p.text_embedding("t") == unit3);
    CHECK_THROWS_AS(p.visual_features("t"), InvalidInput);
    CHECK_THROWS_AS(p.text_embedding("i"), InvalidInput);
    CHECK_THROWS_AS(p.record("missing"), InvalidInput);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(EmbedProvider({rec("i", Modality::Image, Vector::Ones(4))}, pm), Incompatible);
    CHECK_THROWS_AS(EmbedProvider({rec("t", Modality::Meaning, Vector::Ones(3))}, pm), ParseError);
    CHECK_THROWS_AS(EmbedProvider({rec("a", Modality::Image, Vector::Ones(3)), rec("a", Modality::Image, Vector::Ones(3))}, pm),
                    ParseError);
    Vector bad = Vector::Ones(3);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(EmbedProvider({rec("i", Modality::Image, bad)}, pm), ParseError);
  }
  SUBCASE("empty provider") {
    EmbedProvider p(pm);
    CHECK_THROWS_AS(p.visual_features("x"), InvalidInput);
  }
}

}  // TEST_SUITE

TEST_SUITE("synth") {

TEST_CASE("deterministic per seed") {
  const auto a = generate(small_synth(4)), b = generate(small_synth(4)), c = generate(small_synth(5));
  CHECK(a.manifest.records == b.manifest.records);
  REQUIRE(a.embeddings.size() == b.embeddings.size());
  for (std::size_t i = 0; i < a.embeddings.size(); ++i) CHECK(a.embeddings[i].values == b.embeddings[i].values);
  CHECK(a.post_map.matrix() == b.post_map.matrix());
  bool differs = a.embeddings.size() != c.embeddings.size();
  for (std::size_t i = 0; !differs && i < a.embeddings.size(); ++i) differs = a.embeddings[i].values != c.embeddings[i].values;
  CHECK(differs);
}

TEST_CASE("dataset structure") {
  const SynthConfig cfg = small_synth(7);
  const auto ds = generate(cfg);
  EmbedProvider provider(ds.embeddings, ds.post_map);  // validates dims and text norms
  const ManifestIndex index(ds.manifest);
  CHECK(index.scripts() == cfg.scripts);

  std::set<std::string> zs_chars, regular_chars;
  for (const auto& r : ds.manifest.records) {
    if (r.kind != Modality::Image) continue;
    (r.split == Split::ZeroShot ? zs_chars : regular_chars).insert(r.character);
  }
  CHECK(zs_chars.size() == 5);
  for (const auto& ch : zs_chars) {
    CHECK_FALSE(regular_chars.count(ch));
    CHECK(index.meaning_of(ch).has_value());
  }
  for (const auto& ch : regular_chars) CHECK(index.meaning_of(ch).has_value());

  for (const auto& s : cfg.scripts) {
    CHECK_FALSE(index.images(s, Split::Train).empty());
    CHECK_FALSE(index.images(s, Split::Test).empty());
    for (std::size_t i : index.images(s, Split::Train)) CHECK(index.shape_of(index.record(i).id).has_value());
  }

  const auto sum = summarize(ds.manifest);
  CHECK(sum.totals.at(Split::Train).classes == 20);
  CHECK(sum.min_class_images >= static_cast<std::size_t>(cfg.images_min));
  CHECK(sum.max_class_images <= static_cast<std::size_t>(cfg.images_max));
  std::ostringstream os;
  print_summary(os, sum);
  CHECK(os.str().find("WSC") != std::string::npos);
}

TEST_CASE("infeasible settings are rejected") {
  SynthConfig c = small_synth(0);
  c.chars_per_script = 16;
  CHECK_THROWS_AS(generate(c), InvalidInput);
  c = small_synth(0);
  c.scripts = {"CS", "CS"};
  CHECK_THROWS_AS(generate(c), InvalidInput);
  c = small_synth(0);
  c.images_min = 1;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

}  // TEST_SUITE
