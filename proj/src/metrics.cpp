#include "cret/metrics.hpp"

#include <algorithm>
#include <string>

#include "cret/error.hpp"

namespace cret {

void AccuracyMatrix::validate() const {
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != t + 1) {
      throw InvalidInput("accuracy matrix row " + std::to_string(t + 1) + " is incomplete");
    }
    for (double v : rows[t]) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("accuracy outside [0,1]");
    }
  }
}

double compute_AA(const AccuracyMatrix& m, std::size_t t) {
  if (t < 1 || t > m.rows.size() || m.rows[t - 1].size() != t) {
    throw InvalidInput("compute_AA: row " + std::to_string(t) + " is incomplete");
  }
  double s = 0.0;
  for (double v : m.rows[t - 1]) s += v;
  return s / static_cast<double>(t);
}

double compute_FGT(const AccuracyMatrix& m, std::size_t T) {
  if (T < 2) throw InvalidInput("compute_FGT: needs at least two stages");
  if (T > m.rows.size()) throw InvalidInput("compute_FGT: missing rows");
  for (std::size_t t = 0; t < T; ++t) {
    if (m.rows[t].size() != t + 1) throw InvalidInput("compute_FGT: incomplete row");
  }
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < T; ++i) {
    double best = m.rows[i][i];
    for (std::size_t t = i; t + 1 < T; ++t) best = std::max(best, m.rows[t][i]);
    s += best - m.rows[T - 1][i];
  }
  return s / static_cast<double>(T - 1);
}

void MetricsReport::finalize() {
  top1.validate();
  top10.validate();
  aa_top1.clear();
  aa_top10.clear();
  for (std::size_t t = 1; t <= top1.stages(); ++t) aa_top1.push_back(compute_AA(top1, t));
  for (std::size_t t = 1; t <= top10.stages(); ++t) aa_top10.push_back(compute_AA(top10, t));
  fgt_top1.reset();
  fgt_top10.reset();
  if (top1.stages() >= 2) fgt_top1 = compute_FGT(top1, top1.stages());
  if (top10.stages() >= 2) fgt_top10 = compute_FGT(top10, top10.stages());
}

}  // namespace cret
