#include "cret/config.hpp"

#include <set>

#include "cret/error.hpp"

namespace cret {

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::Full: return "full";
    case RunMode::Frozen: return "frozen";
    case RunMode::SeqSingleAdapter: return "seq_single_adapter";
    case RunMode::GoldRouting: return "gold_routing";
    case RunMode::MeanProto: return "mean_proto";
    case RunMode::RsProto: return "rs_proto";
    case RunMode::ImageOnlyPhase1: return "image_only_phase1";
  }
  return "full";
}

const std::vector<RunMode>& all_run_modes() {
  static const std::vector<RunMode> modes = {
      RunMode::Full,       RunMode::Frozen,  RunMode::SeqSingleAdapter, RunMode::GoldRouting,
      RunMode::MeanProto, RunMode::RsProto, RunMode::ImageOnlyPhase1};
  return modes;
}

RunMode parse_run_mode(std::string_view s) {
  for (RunMode m : all_run_modes()) {
    if (to_string(m) == s) return m;
  }
  throw InvalidInput("unknown mode '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  if (stage_order.empty()) throw InvalidInput("config: empty stage order");
  if (std::set<std::string>(stage_order.begin(), stage_order.end()).size() != stage_order.size()) {
    throw InvalidInput("config: repeated script in stage order");
  }
  if (canonical_order && stage_order != kCanonicalScripts) {
    throw ContractViolation("config: stage order differs from the canonical onboarding sequence");
  }
  const auto& t = train;
  if (t.phase1_epochs < 0 || t.phase2_epochs < 0 || t.router_epochs < 0) {
    throw InvalidInput("config: negative epoch count");
  }
  if (t.batch_size == 0) throw InvalidInput("config: batch size must be positive");
  if (!(t.tau > 0.0)) throw InvalidInput("config: temperature must be positive");
  if (t.lr < 0.0 || t.router_lr < 0.0 || t.weight_decay < 0.0) throw InvalidInput("config: negative rate");
  if (t.warmup_ratio < 0.0 || t.warmup_ratio > 1.0) throw InvalidInput("config: warmup ratio outside [0,1]");
  if (t.rank < 1 || t.router_hidden < 1) throw InvalidInput("config: rank and router width must be positive");
  if (buffer_capacity == 0) throw InvalidInput("config: buffer capacity must be positive");
  if (bank.k_max < 1 || bank.sample_cap == 0 || bank.random_protos == 0 || bank.max_iters < 1) {
    throw InvalidInput("config: invalid dictionary settings");
  }
  if (data.source == DataConfig::Source::Files &&
      (data.manifest_path.empty() || data.embeddings_path.empty())) {
    throw InvalidInput("config: file data source needs manifest and embeddings paths");
  }
}

BankConfig RunConfig::effective_bank() const {
  BankConfig b = bank;
  if (mode == RunMode::MeanProto) b.strategy = BankStrategy::Mean;
  if (mode == RunMode::RsProto) b.strategy = BankStrategy::RandomSample;
  return b;
}

}  // namespace cret
