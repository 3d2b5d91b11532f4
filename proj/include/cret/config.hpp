#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cret/buffer.hpp"
#include "cret/dictionary.hpp"
#include "cret/objectives.hpp"
#include "cret/router.hpp"
#include "cret/synth.hpp"

namespace cret {

/// Evaluation / ablation modes of a continual run.
enum class RunMode {
  Full,              // per-script adapters, learned routing, Auto-K bank
  Frozen,            // no adapters, raw provider embeddings
  SeqSingleAdapter,  // one shared adapter fine-tuned at every stage, no routing
  GoldRouting,       // true script picks the adapter at evaluation
  MeanProto,         // one normalized class mean per class
  RsProto,           // M random class embeddings per class
  ImageOnlyPhase1,   // no text positives during new-script adaptation
};

std::string_view to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);
const std::vector<RunMode>& all_run_modes();

struct TrainConfig {
  int phase1_epochs = 6;
  int phase2_epochs = 5;
  std::size_t batch_size = kDefaultBatchSize;
  double tau = kDefaultTemperature;
  double lr = 1e-4;
  double weight_decay = 0.1;
  double warmup_ratio = 0.01;
  double router_lr = 1e-4;
  int router_epochs = 5;
  int router_hidden = static_cast<int>(kRouterHidden);
  int rank = 64;
  double alpha_init = 0.5;
  PositiveRatios ratios;
  bool phase2 = true;  // disable to isolate Phase-I effects
};

enum class PostMapKind { Identity, Orthogonal };

struct DataConfig {
  enum class Source { Synth, Files } source = Source::Synth;
  SynthConfig synth;            // used when source == Synth
  std::string manifest_path;    // used when source == Files
  std::string embeddings_path;
  PostMapKind post_map = PostMapKind::Identity;  // Files only; Synth follows the generator
  std::uint64_t post_map_seed = 0;
};

struct RunConfig {
  std::vector<std::string> stage_order = kCanonicalScripts;
  bool canonical_order = true;  // reject any order other than the canonical one
  std::uint64_t seed = 0;
  RunMode mode = RunMode::Full;
  TrainConfig train;
  BankConfig bank;
  std::size_t buffer_capacity = kDefaultBufferCapacity;
  DataConfig data;
  std::string out_dir;           // empty: nothing written
  bool write_checkpoints = true;
  bool record_timings = true;

  /// Throws InvalidInput on inconsistent settings.
  void validate() const;

  /// Bank settings after the mode's strategy override.
  BankConfig effective_bank() const;
};

}  // namespace cret
