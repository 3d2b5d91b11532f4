#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cret/buffer.hpp"
#include "cret/config.hpp"
#include "cret/dictionary.hpp"
#include "cret/manifest.hpp"
#include "cret/metrics.hpp"
#include "cret/provider.hpp"
#include "cret/router.hpp"
#include "cret/sia.hpp"

namespace cret {

/// Everything a finished stage needs for inference, plus the replay buffer.
struct StageState {
  int stage = 0;                        // number of onboarded scripts
  RunMode mode = RunMode::Full;
  std::vector<std::string> scripts;     // onboarded, in order
  std::vector<SiaParams> adapters;      // one per script; one shared in SeqSingleAdapter; none in Frozen
  std::optional<RouterParams> router;
  MemoryBuffer buffer;
  PrototypeBank bank;
  std::vector<std::string> characters;  // ClassKey::character indexes this table
  std::set<std::string> trained_characters;

  /// Adapter used for a query; `true_script` is only read in GoldRouting.
  const SiaParams* route(const Vector& feature, int true_script) const;
  int route_index(const Vector& feature, int true_script) const;

  /// SAR-routed (or mode-specific) retrieval embedding of a visual feature.
  Vector embed(const Vector& feature, int true_script, const PostMap& post) const;

  int character_index(const std::string& name) const;
};

/// Which part of a stage is currently reading data.
enum class Phase { Idle, PhaseOne, PhaseTwo, BankBuild, Evaluation, ZeroShot };

std::string_view to_string(Phase p);

/// Enforces the stream contract on every data read and counts reads per
/// (phase, script).
class AccessGuard {
 public:
  AccessGuard(const ManifestIndex& index, std::vector<std::string> stage_order);

  void begin(Phase phase, int stage, const MemoryBuffer* buffer = nullptr);
  void end() { phase_ = Phase::Idle; }
  Phase phase() const { return phase_; }

  /// Throws ContractViolation when the current phase may not read `record`.
  void check(std::size_t record);

  /// Stage index (1-based) of a script, 0 if unknown.
  int stage_of(const std::string& script) const;

  const std::map<std::pair<Phase, std::string>, std::size_t>& reads() const { return reads_; }

 private:
  const ManifestIndex* index_;
  std::vector<std::string> order_;
  Phase phase_ = Phase::Idle;
  int stage_ = 0;
  std::set<std::string> buffered_;
  std::map<std::pair<Phase, std::string>, std::size_t> reads_;
};

struct StageResult {
  std::vector<double> top1;   // A[t][1..t]
  std::vector<double> top10;
  double seconds = 0.0;
};

struct ZeroShotResult {
  double at1 = 0.0;
  double at20 = 0.0;
  std::size_t queries = 0;
};

/// Test-split accuracy of a finished state on stages 1..t, Top-1 and Top-10.
StageResult evaluate_stage(const StageState& state, const ManifestIndex& index,
                           const EmbedProvider& provider, AccessGuard* guard = nullptr);

/// Meaning-text dictionary of every zero-shot character in the manifest.
TextDictionary zero_shot_dictionary(const ManifestIndex& index, const EmbedProvider& provider);

/// ZS@1 / ZS@20 over zero-shot image queries of onboarded scripts.
/// Throws ContractViolation if a zero-shot character was trained on.
ZeroShotResult run_zero_shot(const StageState& state, const ManifestIndex& index,
                             const EmbedProvider& provider, const TextDictionary& dict,
                             AccessGuard* guard = nullptr);

/// The staged onboarding driver.
class ContinualEngine {
 public:
  /// `manifest` and `provider` must outlive the engine.
  ContinualEngine(RunConfig config, const DatasetManifest& manifest, const EmbedProvider& provider);

  const RunConfig& config() const { return config_; }
  const StageState& state() const { return state_; }
  const ManifestIndex& index() const { return index_; }
  const AccessGuard& guard() const { return guard_; }
  const AccuracyMatrix& top1() const { return top1_; }
  const AccuracyMatrix& top10() const { return top10_; }

  /// Onboards `script` as the next stage: Phase-I, buffer update, Phase-II,
  /// bank rebuild, evaluation. Throws ContractViolation on out-of-order stages.
  StageResult run_stage(const std::string& script);

  /// Phase-I alone on the next stage; for inspecting the freeze contract.
  void run_phase_one(const std::string& script);

  ZeroShotResult zero_shot();

  /// All configured stages, zero-shot track, and the report.
  MetricsReport run_all();

 private:
  void begin_stage(const std::string& script);
  void phase_one();
  void update_buffer();
  void phase_two();
  void train_router();
  void rebuild_bank();

  const Vector& feature(std::size_t record);
  const Vector& text(std::size_t record);

  RunConfig config_;
  const DatasetManifest* manifest_;
  ManifestIndex index_;
  const EmbedProvider* provider_;
  AccessGuard guard_;
  StageState state_;
  AccuracyMatrix top1_;
  AccuracyMatrix top10_;
  std::vector<double> seconds_;
  bool phase_one_done_ = false;
};

}  // namespace cret
