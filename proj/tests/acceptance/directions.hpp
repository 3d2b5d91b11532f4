#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cret/config.hpp"
#include "cret/metrics.hpp"

namespace acceptance {

using Results = std::map<std::pair<cret::RunMode, std::uint64_t>, cret::MetricsReport>;

enum class Metric { AA6, FGT, ZS1 };

/// margin = sign * (metric(lhs) - metric(rhs)); a direction holds on a seed
/// when every comparison in its group clears its threshold.
struct Comparison {
  std::string group;
  std::string name;
  cret::RunMode lhs;
  cret::RunMode rhs;
  Metric metric;
  double sign;
  bool inclusive;  // >= threshold rather than >
};

inline const std::vector<Comparison>& comparisons() {
  using cret::RunMode;
  static const std::vector<Comparison> c = {
      {"a", "full_vs_frozen_aa6", RunMode::Full, RunMode::Frozen, Metric::AA6, 1.0, false},
      {"b", "seq_vs_full_fgt", RunMode::SeqSingleAdapter, RunMode::Full, Metric::FGT, 1.0, false},
      {"c", "gold_vs_full_aa6", RunMode::GoldRouting, RunMode::Full, Metric::AA6, 1.0, true},
      {"d", "full_vs_mean_aa6", RunMode::Full, RunMode::MeanProto, Metric::AA6, 1.0, false},
      {"d", "full_vs_rs_aa6", RunMode::Full, RunMode::RsProto, Metric::AA6, 1.0, false},
      {"e", "full_vs_image_only_zs1", RunMode::Full, RunMode::ImageOnlyPhase1, Metric::ZS1, 1.0, false},
  };
  return c;
}

inline std::vector<cret::RunMode> modes_needed() {
  std::vector<cret::RunMode> out;
  for (const auto& c : comparisons()) {
    for (auto m : {c.lhs, c.rhs}) {
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
  }
  return out;
}

inline double metric_of(const cret::MetricsReport& r, Metric m) {
  switch (m) {
    case Metric::AA6: return r.aa_top1.back();
    case Metric::FGT: return r.fgt_top1.value();
    case Metric::ZS1: return r.zs_at1.value();
  }
  return 0.0;
}

inline double margin(const Results& res, const Comparison& c, std::uint64_t seed) {
  return c.sign * (metric_of(res.at({c.lhs, seed}), c.metric) - metric_of(res.at({c.rhs, seed}), c.metric));
}

inline bool clears(const Comparison& c, double m, double threshold) {
  return c.inclusive ? m >= threshold : m > threshold;
}

}  // namespace acceptance
