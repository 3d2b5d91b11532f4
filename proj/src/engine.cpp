#include "cret/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include "cret/error.hpp"
#include "cret/io.hpp"
#include "cret/objectives.hpp"
#include "cret/rng.hpp"

namespace cret {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

bool uses_router(RunMode m) { return m != RunMode::Frozen && m != RunMode::SeqSingleAdapter; }

}  // namespace

// ---------------------------------------------------------------------------
// StageState
// ---------------------------------------------------------------------------

int StageState::route_index(const Vector& feature, int true_script) const {
  switch (mode) {
    case RunMode::Frozen:
      return -1;
    case RunMode::SeqSingleAdapter:
      return adapters.empty() ? -1 : 0;
    case RunMode::GoldRouting:
      if (true_script < 0 || true_script >= static_cast<int>(adapters.size())) {
        throw InvalidInput("gold routing: script index out of range");
      }
      return true_script;
    default:
      if (adapters.empty()) return -1;
      if (!router || router->num_scripts() < 2) return 0;
      return route_select(route_probs(feature, *router));
  }
}

const SiaParams* StageState::route(const Vector& feature, int true_script) const {
  const int k = route_index(feature, true_script);
  return k < 0 ? nullptr : &adapters.at(static_cast<std::size_t>(k));
}

Vector StageState::embed(const Vector& feature, int true_script, const PostMap& post) const {
  const SiaParams* a = route(feature, true_script);
  return post.apply(a ? sia_apply(feature, *a) : feature);
}

int StageState::character_index(const std::string& name) const {
  auto it = std::lower_bound(characters.begin(), characters.end(), name);
  if (it == characters.end() || *it != name) return -1;
  return static_cast<int>(it - characters.begin());
}

// ---------------------------------------------------------------------------
// AccessGuard
// ---------------------------------------------------------------------------

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::PhaseOne: return "phase1";
    case Phase::PhaseTwo: return "phase2";
    case Phase::BankBuild: return "bank";
    case Phase::Evaluation: return "eval";
    case Phase::ZeroShot: return "zero-shot";
  }
  return "idle";
}

AccessGuard::AccessGuard(const ManifestIndex& index, std::vector<std::string> stage_order)
    : index_(&index), order_(std::move(stage_order)) {}

int AccessGuard::stage_of(const std::string& script) const {
  auto it = std::find(order_.begin(), order_.end(), script);
  return it == order_.end() ? 0 : static_cast<int>(it - order_.begin()) + 1;
}

void AccessGuard::begin(Phase phase, int stage, const MemoryBuffer* buffer) {
  phase_ = phase;
  stage_ = stage;
  buffered_.clear();
  if (buffer) {
    for (const auto& e : buffer->entries) buffered_.insert(e.id);
  }
}

void AccessGuard::check(std::size_t rec) {
  const Record& r = index_->record(rec);
  auto deny = [&](const std::string& why) {
    throw ContractViolation("stage " + std::to_string(stage_) + " " + std::string(to_string(phase_)) +
                            ": read of '" + r.id + "' denied (" + why + ")");
  };
  const int rs = r.script.empty() ? 0 : stage_of(r.script);
  if (rs > stage_) deny("future-stage data");

  switch (phase_) {
    case Phase::Idle:
      deny("no phase active");
      break;
    case Phase::PhaseOne:
      if (r.split != Split::Train) deny("not a training record");
      if (r.kind == Modality::Meaning) {
        const std::string& script = order_.at(static_cast<std::size_t>(stage_ - 1));
        if (index_->class_train_images(script, r.character).empty()) deny("meaning text of another stage");
      } else if (rs != stage_) {
        deny("earlier-stage training data");
      }
      break;
    case Phase::PhaseTwo:
      if (r.kind != Modality::Image || r.split != Split::Train || !buffered_.count(r.id)) {
        deny("not in the replay buffer");
      }
      break;
    case Phase::BankBuild:
      if (r.kind != Modality::Image || r.split != Split::Train || rs < 1) deny("not an observed training image");
      break;
    case Phase::Evaluation:
      if (r.kind != Modality::Image || r.split != Split::Test || rs < 1) deny("not an observed test image");
      break;
    case Phase::ZeroShot:
      if (r.split != Split::ZeroShot) deny("not a zero-shot record");
      break;
  }
  ++reads_[{phase_, r.script}];
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

StageResult evaluate_stage(const StageState& state, const ManifestIndex& index,
                           const EmbedProvider& provider, AccessGuard* guard) {
  const int t = state.stage;
  if (t < 1) throw InvalidInput("evaluate_stage: no onboarded stage");
  if (guard) guard->begin(Phase::Evaluation, t);
  StageResult res;
  for (int i = 0; i < t; ++i) {
    const std::string& script = state.scripts[i];
    const auto tests = index.images(script, Split::Test);
    if (tests.empty()) throw InvalidInput("evaluate_stage: missing test split for " + script);
    std::size_t hit1 = 0;
    std::size_t hit10 = 0;
    for (std::size_t rec : tests) {
      if (guard) guard->check(rec);
      const Record& r = index.record(rec);
      const Vector q = state.embed(provider.visual_features(r.id), i, provider.post_map());
      const ClassKey truth{i, state.character_index(r.character)};
      const auto ranking = rank_classes(q, state.bank, 10);
      for (std::size_t k = 0; k < ranking.size(); ++k) {
        if (ranking[k].key == truth) {
          if (k == 0) ++hit1;
          ++hit10;
          break;
        }
      }
    }
    res.top1.push_back(static_cast<double>(hit1) / static_cast<double>(tests.size()));
    res.top10.push_back(static_cast<double>(hit10) / static_cast<double>(tests.size()));
  }
  if (guard) guard->end();
  return res;
}

TextDictionary zero_shot_dictionary(const ManifestIndex& index, const EmbedProvider& provider) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  const auto& recs = index.manifest().records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].kind == Modality::Meaning && recs[i].split == Split::ZeroShot) {
      entries.emplace_back(recs[i].character, i);
    }
  }
  std::sort(entries.begin(), entries.end());
  TextDictionary dict;
  dict.embeddings.resize(static_cast<Eigen::Index>(entries.size()), provider.dim());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    dict.characters.push_back(entries[k].first);
    dict.embeddings.row(static_cast<Eigen::Index>(k)) =
        provider.text_embedding(recs[entries[k].second].id).transpose();
  }
  return dict;
}

ZeroShotResult run_zero_shot(const StageState& state, const ManifestIndex& index,
                             const EmbedProvider& provider, const TextDictionary& dict,
                             AccessGuard* guard) {
  dict.validate();
  for (const auto& c : dict.characters) {
    if (state.trained_characters.count(c)) {
      throw ContractViolation("zero-shot candidate '" + c + "' appears in training data");
    }
  }
  if (guard) guard->begin(Phase::ZeroShot, state.stage);
  ZeroShotResult res;
  std::size_t hit1 = 0;
  std::size_t hit20 = 0;
  for (std::size_t rec : index.images(Split::ZeroShot)) {
    const Record& r = index.record(rec);
    auto it = std::find(state.scripts.begin(), state.scripts.end(), r.script);
    if (it == state.scripts.end()) continue;
    if (state.trained_characters.count(r.character)) {
      throw ContractViolation("zero-shot query class '" + r.character + "' appears in training data");
    }
    if (guard) guard->check(rec);
    const int s = static_cast<int>(it - state.scripts.begin());
    const Vector q = state.embed(provider.visual_features(r.id), s, provider.post_map());
    const auto ranking = zs_rank(q, dict, 20);
    for (std::size_t k = 0; k < ranking.size(); ++k) {
      if (ranking[k].character == r.character) {
        if (k == 0) ++hit1;
        ++hit20;
        break;
      }
    }
    ++res.queries;
  }
  if (guard) guard->end();
  if (res.queries > 0) {
    res.at1 = static_cast<double>(hit1) / static_cast<double>(res.queries);
    res.at20 = static_cast<double>(hit20) / static_cast<double>(res.queries);
  }
  return res;
}

// ---------------------------------------------------------------------------
// ContinualEngine
// ---------------------------------------------------------------------------

ContinualEngine::ContinualEngine(RunConfig config, const DatasetManifest& manifest,
                                 const EmbedProvider& provider)
    : config_(std::move(config)),
      manifest_(&manifest),
      index_(manifest),
      provider_(&provider),
      guard_(index_, config_.stage_order) {
  config_.validate();
  if (config_.train.rank >= provider.dim()) {
    throw InvalidInput("adapter rank " + std::to_string(config_.train.rank) +
                       " must be below the embedding dim " + std::to_string(provider.dim()));
  }
  for (const auto& script : config_.stage_order) {
    if (index_.images(script, Split::Train).empty()) {
      throw InvalidInput("stage '" + script + "' has no training images");
    }
  }
  std::set<std::string> chars;
  for (const auto& r : manifest.records) {
    if (r.kind == Modality::Image) chars.insert(r.character);
  }
  state_.characters.assign(chars.begin(), chars.end());
  state_.mode = config_.mode;
  state_.buffer.capacity = config_.buffer_capacity;
  state_.bank.config = config_.effective_bank();
}

const Vector& ContinualEngine::feature(std::size_t record) {
  guard_.check(record);
  return provider_->visual_features(index_.record(record).id);
}

const Vector& ContinualEngine::text(std::size_t record) {
  guard_.check(record);
  return provider_->text_embedding(index_.record(record).id);
}

void ContinualEngine::begin_stage(const std::string& script) {
  const auto t = static_cast<std::size_t>(state_.stage);
  if (t >= config_.stage_order.size()) {
    throw ContractViolation("all " + std::to_string(t) + " configured stages are already onboarded");
  }
  if (script != config_.stage_order[t]) {
    throw ContractViolation("out-of-order stage: expected '" + config_.stage_order[t] + "', got '" +
                            script + "' at stage " + std::to_string(t + 1));
  }
  state_.stage = static_cast<int>(t + 1);
  state_.scripts.push_back(script);
  const auto dim = provider_->dim();
  const auto& tc = config_.train;

  if (config_.mode == RunMode::SeqSingleAdapter) {
    if (state_.adapters.empty()) {
      state_.adapters.push_back(sia_init(dim, tc.rank, derive_seed(config_.seed, "sia/shared"),
                                         tc.alpha_init, 0));
    }
  } else if (config_.mode != RunMode::Frozen) {
    state_.adapters.push_back(sia_init(dim, tc.rank, derive_seed(config_.seed, "sia/" + script),
                                       tc.alpha_init, state_.stage - 1));
  }
  if (uses_router(config_.mode)) {
    if (!state_.router) {
      state_.router = router_init(dim, tc.router_hidden, 1, derive_seed(config_.seed, "router/init"));
    } else {
      state_.router = router_grow(*state_.router, state_.stage,
                                  derive_seed(config_.seed, "router/head/" + script));
    }
  }
}

void ContinualEngine::phase_one() {
  if (config_.mode == RunMode::Frozen) return;
  const std::string& script = state_.scripts.back();
  SiaParams& sia = config_.mode == RunMode::SeqSingleAdapter ? state_.adapters.front()
                                                             : state_.adapters.back();
  const auto& tc = config_.train;
  const PostMap& post = provider_->post_map();
  const PositiveRatios ratios =
      config_.mode == RunMode::ImageOnlyPhase1 ? PositiveRatios{1.0, 0.0, 0.0} : tc.ratios;

  guard_.begin(Phase::PhaseOne, state_.stage);
  std::vector<std::size_t> anchors = index_.images(script, Split::Train);
  Rng rng = Rng::keyed(config_.seed, "phase1/" + script);
  const std::size_t per_epoch = ceil_div(anchors.size(), tc.batch_size);
  const CosineSchedule sched{tc.warmup_ratio,
                             static_cast<std::int64_t>(per_epoch * static_cast<std::size_t>(tc.phase1_epochs))};
  AdamWState opt;
  opt.config.weight_decay = tc.weight_decay;
  std::int64_t step = 0;
  const auto dim = provider_->dim();

  for (int epoch = 0; epoch < tc.phase1_epochs; ++epoch) {
    rng.shuffle(anchors);
    for (std::size_t start = 0; start < anchors.size(); start += tc.batch_size) {
      const std::size_t b = std::min(tc.batch_size, anchors.size() - start);
      ContrastiveBatch batch{Matrix(b, dim), Matrix(b, dim), std::vector<Modality>(b),
                             std::vector<bool>(b)};
      std::vector<SiaForward> anchor_fw;
      std::vector<std::optional<SiaForward>> cand_fw(b);
      anchor_fw.reserve(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t a = anchors[start + i];
        anchor_fw.push_back(sia_forward(feature(a), sia));
        batch.anchors.row(i) = post.apply(anchor_fw.back().e_prime).transpose();
        const Positive pos = sample_positive(a, index_, rng, ratios);
        if (pos.source == PositiveSource::SameClassImage) {
          cand_fw[i] = sia_forward(feature(pos.record), sia);
          batch.candidates.row(i) = post.apply(cand_fw[i]->e_prime).transpose();
          batch.candidate_kinds[i] = Modality::Image;
          batch.trainable[i] = true;
        } else {
          batch.candidates.row(i) = text(pos.record).transpose();
          batch.candidate_kinds[i] =
              pos.source == PositiveSource::MeaningText ? Modality::Meaning : Modality::Shape;
          batch.trainable[i] = false;
        }
      }
      const InfoNceResult res = infonce_loss(batch, tc.tau);
      SiaGrads grads = SiaGrads::zeros_like(sia);
      for (std::size_t i = 0; i < b; ++i) {
        const Vector g = post.backward(anchor_fw[i].e_prime, res.grad_anchors.row(i).transpose());
        grads += sia_backward(g, anchor_fw[i].tape, sia).grads;
        if (cand_fw[i]) {
          const Vector gc = post.backward(cand_fw[i]->e_prime, res.grad_candidates.row(i).transpose());
          grads += sia_backward(gc, cand_fw[i]->tape, sia).grads;
        }
      }
      adamw_step(sia.tensors(), grads.tensors(), opt, sched.lr_at(step, tc.lr));
      ++step;
    }
  }
  guard_.end();
}

void ContinualEngine::update_buffer() {
  const std::string& script = state_.scripts.back();
  std::vector<BufferEntry> stage_train;
  for (std::size_t rec : index_.images(script, Split::Train)) {
    const Record& r = index_.record(rec);
    stage_train.push_back({r.id, r.script, r.character});
    state_.trained_characters.insert(r.character);
  }
  Rng rng = Rng::keyed(config_.seed, "buffer/" + script);
  state_.buffer = buffer_update(state_.buffer, stage_train, state_.scripts, rng);
}

void ContinualEngine::phase_two() {
  if (!config_.train.phase2) return;
  if (config_.mode == RunMode::Frozen || config_.mode == RunMode::SeqSingleAdapter) return;
  const auto& tc = config_.train;
  const PostMap& post = provider_->post_map();
  const std::string& script = state_.scripts.back();
  const auto dim = provider_->dim();

  guard_.begin(Phase::PhaseTwo, state_.stage, &state_.buffer);
  Rng rng = Rng::keyed(config_.seed, "phase2/" + script);
  std::vector<std::size_t> records;
  std::vector<int> script_of;
  for (const auto& e : state_.buffer.entries) {
    records.push_back(*index_.find(e.id));
    script_of.push_back(guard_.stage_of(e.script) - 1);
  }

  const std::size_t per_epoch = ceil_div(records.size(), tc.batch_size);
  const CosineSchedule sched{tc.warmup_ratio,
                             static_cast<std::int64_t>(per_epoch * static_cast<std::size_t>(tc.phase2_epochs))};
  std::vector<AdamWState> opts(state_.adapters.size());
  for (auto& o : opts) o.config.weight_decay = tc.weight_decay;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < tc.phase2_epochs; ++epoch) {
    for (const auto& pairs : phase2_pair_sampler(state_.buffer, rng, tc.batch_size)) {
      const std::size_t b = pairs.size();
      ContrastiveBatch batch{Matrix(b, dim), Matrix(b, dim), std::vector<Modality>(b, Modality::Image),
                             std::vector<bool>(b, true)};
      std::vector<SiaForward> afw;
      std::vector<SiaForward> pfw;
      afw.reserve(b);
      pfw.reserve(b);
      for (std::size_t i = 0; i < b; ++i) {
        const SiaParams& sia = state_.adapters[script_of[pairs[i].anchor]];
        afw.push_back(sia_forward(feature(records[pairs[i].anchor]), sia));
        pfw.push_back(sia_forward(feature(records[pairs[i].positive]), sia));
        batch.anchors.row(i) = post.apply(afw.back().e_prime).transpose();
        batch.candidates.row(i) = post.apply(pfw.back().e_prime).transpose();
      }
      const InfoNceResult res = infonce_loss(batch, tc.tau);
      std::vector<std::optional<SiaGrads>> grads(state_.adapters.size());
      for (std::size_t i = 0; i < b; ++i) {
        const auto s = static_cast<std::size_t>(script_of[pairs[i].anchor]);
        const SiaParams& sia = state_.adapters[s];
        if (!grads[s]) grads[s] = SiaGrads::zeros_like(sia);
        *grads[s] += sia_backward(post.backward(afw[i].e_prime, res.grad_anchors.row(i).transpose()),
                                  afw[i].tape, sia).grads;
        *grads[s] += sia_backward(post.backward(pfw[i].e_prime, res.grad_candidates.row(i).transpose()),
                                  pfw[i].tape, sia).grads;
      }
      const double lr = sched.lr_at(step, tc.lr);
      for (std::size_t s = 0; s < grads.size(); ++s) {
        if (grads[s]) adamw_step(state_.adapters[s].tensors(), grads[s]->tensors(), opts[s], lr);
      }
      ++step;
    }
  }
  train_router();
  guard_.end();
}

void ContinualEngine::train_router() {
  if (!state_.router || state_.router->num_scripts() < 2) return;
  const auto& tc = config_.train;
  RouterParams& router = *state_.router;
  const std::string& script = state_.scripts.back();
  Rng rng = Rng::keyed(config_.seed, "router/" + script);

  std::vector<std::size_t> order(state_.buffer.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_epoch = ceil_div(order.size(), tc.batch_size);
  const CosineSchedule sched{tc.warmup_ratio,
                             static_cast<std::int64_t>(per_epoch * static_cast<std::size_t>(tc.router_epochs))};
  AdamWState opt;
  opt.config.weight_decay = tc.weight_decay;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < tc.router_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      Matrix batch(static_cast<Eigen::Index>(end - start), router.dim());
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const auto& e = state_.buffer.entries[order[k]];
        batch.row(static_cast<Eigen::Index>(k - start)) = feature(*index_.find(e.id)).transpose();
        labels.push_back(guard_.stage_of(e.script) - 1);
      }
      const RouterGrads grads = router_ce_loss_batch(batch, labels, router).grads;
      adamw_step(router.tensors(), grads.tensors(), opt, sched.lr_at(step, tc.router_lr));
      ++step;
    }
  }
}

void ContinualEngine::rebuild_bank() {
  guard_.begin(Phase::BankBuild, state_.stage);
  const PostMap& post = provider_->post_map();
  std::vector<std::size_t> recs;
  std::vector<int> script_idx;
  for (int s = 0; s < state_.stage; ++s) {
    for (std::size_t rec : index_.images(state_.scripts[s], Split::Train)) {
      recs.push_back(rec);
      script_idx.push_back(s);
    }
  }
  LabeledEmbeddings data;
  data.embeddings.resize(static_cast<Eigen::Index>(recs.size()), provider_->dim());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const Record& r = index_.record(recs[i]);
    data.embeddings.row(static_cast<Eigen::Index>(i)) =
        state_.embed(feature(recs[i]), script_idx[i], post).transpose();
    data.keys.push_back({script_idx[i], state_.character_index(r.character)});
  }
  BankConfig bc = config_.effective_bank();
  bc.seed = derive_seed(config_.seed, "bank");
  state_.bank = build_bank(data, bc);
  guard_.end();
}

void ContinualEngine::run_phase_one(const std::string& script) {
  begin_stage(script);
  phase_one();
  phase_one_done_ = true;
}

StageResult ContinualEngine::run_stage(const std::string& script) {
  const auto t0 = std::chrono::steady_clock::now();
  if (phase_one_done_) {
    if (state_.scripts.empty() || script != state_.scripts.back()) {
      throw ContractViolation("stage '" + state_.scripts.back() + "' has a pending Phase-I");
    }
    phase_one_done_ = false;
  } else {
    begin_stage(script);
    phase_one();
  }
  update_buffer();
  phase_two();
  rebuild_bank();
  StageResult res = evaluate_stage(state_, index_, *provider_, &guard_);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  top1_.rows.push_back(res.top1);
  top10_.rows.push_back(res.top10);
  seconds_.push_back(res.seconds);
  return res;
}

ZeroShotResult ContinualEngine::zero_shot() {
  const TextDictionary dict = zero_shot_dictionary(index_, *provider_);
  if (dict.size() == 0) return {};
  return run_zero_shot(state_, index_, *provider_, dict, &guard_);
}

MetricsReport ContinualEngine::run_all() {
  namespace fs = std::filesystem;
  const std::string digest = config_digest(config_);
  const fs::path out = config_.out_dir;
  if (!out.empty()) fs::create_directories(out);

  for (std::size_t i = static_cast<std::size_t>(state_.stage); i < config_.stage_order.size(); ++i) {
    const StageResult row = run_stage(config_.stage_order[i]);
    if (!out.empty() && config_.write_checkpoints) {
      Checkpoint ck;
      ck.state = state_;
      ck.dim = provider_->dim();
      ck.post_map = provider_->post_map().is_identity() ? PostMapKind::Identity : PostMapKind::Orthogonal;
      ck.post_map_seed = provider_->post_map().seed();
      ck.seed = config_.seed;
      ck.config_digest = digest;
      ck.row = row;
      write_checkpoint(out / ("stage" + std::to_string(state_.stage) + ".ckpt.json"), ck);
    }
  }

  MetricsReport report;
  report.mode = std::string(to_string(config_.mode));
  report.seed = config_.seed;
  report.config_digest = digest;
  report.stage_order = config_.stage_order;
  report.top1 = top1_;
  report.top10 = top10_;
  const ZeroShotResult zs = zero_shot();
  if (zs.queries > 0) {
    report.zs_at1 = zs.at1;
    report.zs_at20 = zs.at20;
  }
  if (config_.record_timings) report.stage_seconds = seconds_;
  report.finalize();
  if (!out.empty()) write_report(out, report);
  return report;
}

}  // namespace cret
