#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cret {

/// rows[t-1][i-1] = accuracy on stage-i test split after stage t, i <= t.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  std::size_t stages() const { return rows.size(); }
  void validate() const;
  bool operator==(const AccuracyMatrix&) const = default;
};

/// (1/t) * sum_i A[t][i]
double compute_AA(const AccuracyMatrix& m, std::size_t t);

/// (1/(T-1)) * sum_{i<T} (max_{i<=t<T} A[t][i] - A[T][i]); unclamped.
double compute_FGT(const AccuracyMatrix& m, std::size_t T);

struct MetricsReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<std::string> stage_order;
  AccuracyMatrix top1;
  AccuracyMatrix top10;
  std::vector<double> aa_top1;   // AA_1..AA_T
  std::vector<double> aa_top10;
  std::optional<double> fgt_top1;  // absent when T < 2
  std::optional<double> fgt_top10;
  std::optional<double> zs_at1;
  std::optional<double> zs_at20;
  std::vector<double> stage_seconds;  // empty when timings are disabled

  /// Recomputes AA/FGT from the matrices.
  void finalize();
};

}  // namespace cret
