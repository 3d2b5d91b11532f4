#include <doctest.h>

#include <algorithm>

#include "cret/engine.hpp"
#include "cret/error.hpp"
#include "cret/io.hpp"

using namespace cret;

namespace {

struct World {
  SynthDataset data;
  EmbedProvider provider;

  explicit World(SynthConfig sc) : data(generate(sc)), provider(data.embeddings, data.post_map) {}
};

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.dim = 32;
  c.chars_per_script = 12;
  c.char_pool = 20;
  c.zero_shot_chars = 8;
  c.images_max = 16;
  c.seed = seed;
  return c;
}

RunConfig small_run(RunMode mode = RunMode::Full) {
  RunConfig c;
  c.mode = mode;
  c.buffer_capacity = 60;
  c.record_timings = false;
  c.train.phase1_epochs = 2;
  c.train.phase2_epochs = 1;
  c.train.batch_size = 16;
  c.train.lr = 3e-3;
  c.train.router_lr = 3e-3;
  c.train.router_epochs = 3;
  c.train.router_hidden = 32;
  c.train.rank = 4;
  return c;
}

const World& world() {
  static const World w(small_synth(1));
  return w;
}

std::size_t find_record(const DatasetManifest& m, const std::string& script, Modality kind, Split split) {
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const Record& r = m.records[i];
    if (r.script == script && r.kind == kind && r.split == split) return i;
  }
  FAIL("no such record");
  return 0;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("stage order") {
  const World& w = world();
  CHECK_NOTHROW(ContinualEngine(small_run(), w.data.manifest, w.provider));
  RunConfig swapped = small_run();
  std::swap(swapped.stage_order[0], swapped.stage_order[1]);
  CHECK_THROWS_AS(ContinualEngine(swapped, w.data.manifest, w.provider), ContractViolation);
  RunConfig reversed = small_run();
  std::reverse(reversed.stage_order.begin(), reversed.stage_order.end());
  CHECK_THROWS_AS(ContinualEngine(reversed, w.data.manifest, w.provider), ContractViolation);

  ContinualEngine engine(small_run(), w.data.manifest, w.provider);
  CHECK_THROWS_AS(engine.run_stage("WSC"), ContractViolation);
  engine.run_stage("CS");
  CHECK_THROWS_AS(engine.run_stage("CS"), ContractViolation);
  CHECK_THROWS_AS(engine.run_stage("SAC"), ContractViolation);
}

TEST_CASE("earlier adapters are frozen") {
  const World& w = world();
  RunConfig cfg = small_run();
  cfg.train.phase2 = false;
  ContinualEngine engine(cfg, w.data.manifest, w.provider);
  engine.run_stage("CS");
  const SiaParams first = engine.state().adapters.at(0);
  CHECK_FALSE(first.w_up.isZero(0.0));

  engine.run_phase_one("WSC");
  CHECK(engine.state().adapters.at(0) == first);
  CHECK_FALSE(engine.state().adapters.at(1).w_up.isZero(0.0));
  engine.run_stage("WSC");
  CHECK(engine.state().adapters.at(0) == first);
  engine.run_stage("SAC");
  CHECK(engine.state().adapters.at(0) == first);
}

TEST_CASE("adapters are disjoint per script") {
  const World& w = world();
  ContinualEngine engine(small_run(), w.data.manifest, w.provider);
  engine.run_stage("CS");
  engine.run_stage("WSC");
  const auto& a = engine.state().adapters;
  REQUIRE(a.size() == 2);
  CHECK(a[0].script_id == 0);
  CHECK(a[1].script_id == 1);
  CHECK(a[0].w1 != a[1].w1);
  CHECK(a[0].w_up.data() != a[1].w_up.data());
}

TEST_CASE("access guard") {
  const World& w = world();
  const ManifestIndex index(w.data.manifest);
  const auto& m = w.data.manifest;
  AccessGuard g(index, kCanonicalScripts);
  const std::size_t cs_train = find_record(m, "CS", Modality::Image, Split::Train);
  const std::size_t cs_test = find_record(m, "CS", Modality::Image, Split::Test);
  const std::size_t wsc_train = find_record(m, "WSC", Modality::Image, Split::Train);

  CHECK_THROWS_AS(g.check(cs_train), ContractViolation);  // idle
  g.begin(Phase::PhaseOne, 1);
  CHECK_NOTHROW(g.check(cs_train));
  CHECK_THROWS_AS(g.check(wsc_train), ContractViolation);
  CHECK_THROWS_AS(g.check(cs_test), ContractViolation);
  g.end();

  g.begin(Phase::PhaseOne, 2);
  CHECK_THROWS_AS(g.check(cs_train), ContractViolation);
  CHECK_NOTHROW(g.check(wsc_train));
  g.end();

  MemoryBuffer buf;
  buf.entries.push_back({m.records[cs_train].id, "CS", m.records[cs_train].character});
  g.begin(Phase::PhaseTwo, 2, &buf);
  CHECK_NOTHROW(g.check(cs_train));
  CHECK_THROWS_AS(g.check(wsc_train), ContractViolation);
  g.end();

  g.begin(Phase::Evaluation, 1);
  CHECK_NOTHROW(g.check(cs_test));
  CHECK_THROWS_AS(g.check(cs_train), ContractViolation);
  CHECK_THROWS_AS(g.check(find_record(m, "WSC", Modality::Image, Split::Test)), ContractViolation);
  g.end();

  const auto& reads = g.reads();
  CHECK(reads.at({Phase::PhaseOne, "CS"}) == 1);
  CHECK(reads.at({Phase::PhaseOne, "WSC"}) == 1);
  CHECK(reads.at({Phase::PhaseTwo, "CS"}) == 1);
  CHECK(reads.at({Phase::Evaluation, "CS"}) == 1);
  CHECK(reads.size() == 4);
}

TEST_CASE("full run: buffer balance, zero-shot ordering, read log") {
  const World& w = world();
  ContinualEngine engine(small_run(), w.data.manifest, w.provider);
  const MetricsReport r = engine.run_all();
  CHECK(r.top1.stages() == 6);
  CHECK(r.stage_seconds.empty());

  const auto quotas = buffer_quotas(60, 6);
  for (std::size_t s = 0; s < 6; ++s) CHECK(engine.state().buffer.count(kCanonicalScripts[s]) == quotas[s]);

  REQUIRE(r.zs_at1.has_value());
  CHECK(*r.zs_at1 <= *r.zs_at20);
  CHECK(*r.zs_at20 <= 1.0);

  for (const auto& [key, n] : engine.guard().reads()) {
    const auto& [phase, script] = key;
    CHECK(n > 0);
    if (phase == Phase::PhaseTwo || phase == Phase::BankBuild || phase == Phase::Evaluation) {
      CHECK(std::count(kCanonicalScripts.begin(), kCanonicalScripts.end(), script) == 1);
    }
  }
  CHECK(engine.guard().reads().count({Phase::ZeroShot, "CS"}) == 1);
}

TEST_CASE("runs are deterministic") {
  const World& w = world();
  ContinualEngine a(small_run(), w.data.manifest, w.provider);
  ContinualEngine b(small_run(), w.data.manifest, w.provider);
  CHECK(to_json(a.run_all()).dump() == to_json(b.run_all()).dump());
  CHECK(a.state().adapters == b.state().adapters);
  CHECK(a.state().router == b.state().router);
  CHECK(a.state().bank == b.state().bank);
  CHECK(a.state().buffer == b.state().buffer);
}

TEST_CASE("frozen mode trains nothing") {
  const World& w = world();
  ContinualEngine engine(small_run(RunMode::Frozen), w.data.manifest, w.provider);
  engine.run_stage("CS");
  engine.run_stage("WSC");
  CHECK(engine.state().adapters.empty());
  CHECK_FALSE(engine.state().router.has_value());
  const auto& rec = w.data.manifest.records[find_record(w.data.manifest, "WSC", Modality::Image, Split::Test)];
  const Vector f = w.provider.visual_features(rec.id);
  CHECK(engine.state().embed(f, 1, w.provider.post_map()) == w.provider.post_map_apply(f));
}

TEST_CASE("self-retrieval is perfect") {
  const World& w = world();
  const ManifestIndex index(w.data.manifest);
  StageState st;
  st.mode = RunMode::Frozen;
  st.stage = 2;
  st.scripts = {"CS", "WSC"};
  for (const auto& r : w.data.manifest.records)
    if (r.kind == Modality::Image) st.characters.push_back(r.character);
  std::sort(st.characters.begin(), st.characters.end());
  st.characters.erase(std::unique(st.characters.begin(), st.characters.end()), st.characters.end());

  // one prototype per test image
  LabeledEmbeddings d;
  std::vector<Vector> rows;
  for (int s = 0; s < 2; ++s) {
    for (std::size_t i : index.images(st.scripts[s], Split::Test)) {
      const Record& r = index.record(i);
      rows.push_back(w.provider.post_map_apply(w.provider.visual_features(r.id)));
      d.keys.push_back({s, st.character_index(r.character)});
    }
  }
  d.embeddings.resize(static_cast<Eigen::Index>(rows.size()), w.provider.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) d.embeddings.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  BankConfig cfg;
  cfg.strategy = BankStrategy::RandomSample;
  cfg.random_protos = 1000;
  st.bank = build_bank(d, cfg);

  const StageResult res = evaluate_stage(st, index, w.provider);
  CHECK(res.top1 == std::vector<double>{1.0, 1.0});
  CHECK(res.top10 == std::vector<double>{1.0, 1.0});
}

TEST_CASE("zero-shot refuses trained characters") {
  const World& w = world();
  ContinualEngine engine(small_run(), w.data.manifest, w.provider);
  engine.run_stage("CS");
  const TextDictionary dict = zero_shot_dictionary(engine.index(), w.provider);
  REQUIRE(dict.size() == 8);
  StageState st = engine.state();
  st.trained_characters.insert(dict.characters.front());
  CHECK_THROWS_AS(run_zero_shot(st, engine.index(), w.provider, dict), ContractViolation);
}

TEST_CASE("router keeps separating scripts after growth") {
  SynthConfig sc;
  sc.scripts = {"CS", "WSC"};
  sc.script_strength = 1.0;
  sc.script_rank = 32;
  sc.script_offset = 2.0;
  sc.nuisance_scale = 10.0;
  sc.noise_scale = 1.0;
  sc.mode_scale = 3.0;
  sc.zero_shot_chars = 0;
  sc.seed = 2;
  const World w(sc);
  RunConfig cfg = small_run();
  cfg.stage_order = sc.scripts;
  cfg.canonical_order = false;
  cfg.train.rank = 8;
  cfg.train.router_epochs = 30;
  cfg.train.router_hidden = static_cast<int>(kRouterHidden);
  ContinualEngine engine(cfg, w.data.manifest, w.provider);
  engine.run_stage("CS");
  engine.run_stage("WSC");
  REQUIRE(engine.state().router.has_value());
  CHECK(engine.state().router->num_scripts() == 2);

  std::size_t hit = 0, total = 0;
  for (int s = 0; s < 2; ++s) {
    for (std::size_t i : engine.index().images(sc.scripts[s], Split::Test)) {
      hit += engine.state().route_index(w.provider.visual_features(engine.index().record(i).id), -1) == s;
      ++total;
    }
  }
  const double acc = static_cast<double>(hit) / static_cast<double>(total);
  INFO("routing accuracy " << acc << " over " << total);
  CHECK(acc >= 0.95);
}

}  // TEST_SUITE
