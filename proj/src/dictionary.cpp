#include "cret/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "cret/error.hpp"
#include "cret/rng.hpp"

namespace cret {

namespace {

void require_unit_rows(const Matrix& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n > 0.0)) throw DegenerateInput(std::string(what) + ": zero-norm point");
    if (std::abs(n - 1.0) > kUnitNormTol) throw InvalidInput(std::string(what) + ": points must be unit-norm");
  }
}

std::uint64_t class_seed(std::uint64_t seed, const char* purpose, const ClassKey& key) {
  return derive_seed(seed, std::string(purpose) + "/" + std::to_string(key.script) + "/" +
                               std::to_string(key.character));
}

Matrix pick_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Matrix kmeanspp(const Matrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Matrix centers(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(static_cast<std::size_t>(n));
  centers.row(0) = points.row(first);
  chosen[first] = true;
  Vector best = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    const Vector dist = (1.0 - (points * centers.row(c - 1).transpose()).array()).max(0.0).matrix();
    best = best.cwiseMin(dist);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += chosen[i] ? 0.0 : best[i] * best[i];
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        u -= best[i] * best[i];
        pick = i;
        if (u < 0.0) break;
      }
    } else {
      // Everything left coincides with a center: take any unchosen point.
      std::vector<Eigen::Index> rest;
      for (Eigen::Index i = 0; i < n; ++i) if (!chosen[i]) rest.push_back(i);
      pick = rest[rng.below(rest.size())];
    }
    centers.row(c) = points.row(pick);
    chosen[pick] = true;
  }
  return centers;
}

}  // namespace

ClusteringResult spherical_kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iters) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw InvalidInput("spherical_kmeans: k must be >= 1");
  if (n < k) throw InvalidInput("spherical_kmeans: k exceeds the number of points");
  if (max_iters < 1) throw InvalidInput("spherical_kmeans: max_iters must be >= 1");
  require_unit_rows(points, "spherical_kmeans");

  Rng rng(seed);
  ClusteringResult res;
  res.centroids = kmeanspp(points, k, rng);
  res.assignments.assign(n, -1);

  for (int iter = 0; iter < max_iters; ++iter) {
    const Matrix sims = points * res.centroids.transpose();  // n x k
    std::vector<int> next(n);
    std::vector<int> sizes(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < k; ++c) {
        if (sims(i, c) > sims(i, best)) best = c;
      }
      next[i] = static_cast<int>(best);
      ++sizes[best];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      // Seize the point worst served by its centroid from a cluster that can spare it.
      Eigen::Index far = -1;
      double far_dist = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sizes[next[i]] <= 1) continue;
        const double dist = 1.0 - sims(i, next[i]);
        if (dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      --sizes[next[far]];
      next[far] = c;
      sizes[c] = 1;
    }
    const bool changed = next != res.assignments;
    res.assignments = std::move(next);

    Matrix sums = Matrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(res.assignments[i]) += points.row(i);
    for (int c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (norm > 0.0) res.centroids.row(c) = sums.row(c) / norm;
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += 1.0 - points.row(i).dot(res.centroids.row(res.assignments[i]));
    }
    res.inertia = total / static_cast<double>(n);
    res.inertia_history.push_back(res.inertia);
    res.iterations = iter + 1;
    if (!changed) break;
  }
  return res;
}

double silhouette_cos(const Matrix& points, const std::vector<int>& assignments) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(assignments.size()) != n) {
    throw InvalidInput("silhouette_cos: one label per point required");
  }
  if (n == 0) throw InvalidInput("silhouette_cos: no points");
  const int k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  if (k < 2 || *std::min_element(assignments.begin(), assignments.end()) < 0) {
    throw InvalidInput("silhouette_cos: need at least two clusters");
  }
  std::vector<int> sizes(k, 0);
  for (int a : assignments) ++sizes[a];
  if (std::find(sizes.begin(), sizes.end(), 0) != sizes.end()) {
    throw InvalidInput("silhouette_cos: empty cluster");
  }

  const Matrix dist = (1.0 - (points * points.transpose()).array()).matrix();
  double total = 0.0;
  std::vector<double> mean_to(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = assignments[i];
    if (sizes[own] == 1) continue;
    std::fill(mean_to.begin(), mean_to.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) mean_to[assignments[j]] += dist(i, j);
    }
    const double a = mean_to[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, mean_to[c] / sizes[c]);
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

AutoKResult auto_k(const Matrix& points, std::uint64_t seed, int k_max, std::size_t sample_cap) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0) throw InvalidInput("auto_k: no points");
  if (k_max < 1 || sample_cap == 0) throw InvalidInput("auto_k: invalid limits");
  AutoKResult res;
  res.k_max = std::min(k_max, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n)))));
  if (res.k_max < 2) {
    res.k = 1;
    return res;
  }
  Rng rng = Rng::keyed(seed, "auto_k/sample");
  auto rows = rng.sample_without_replacement(n, std::min(n, sample_cap));
  std::sort(rows.begin(), rows.end());
  const Matrix sample = pick_rows(points, rows);

  double best = -std::numeric_limits<double>::infinity();
  for (int k = 2; k <= res.k_max; ++k) {
    const auto km = spherical_kmeans(sample, k, derive_seed(seed, "auto_k/k" + std::to_string(k)));
    const double s = silhouette_cos(sample, km.assignments);
    res.scores.push_back(s);
    if (s > best) {
      best = s;
      res.k = k;
    }
  }
  return res;
}

std::string_view to_string(BankStrategy s) {
  switch (s) {
    case BankStrategy::AutoK: return "autok";
    case BankStrategy::Mean: return "mean";
    case BankStrategy::RandomSample: return "random";
  }
  return "autok";
}

BankStrategy parse_bank_strategy(std::string_view s) {
  if (s == "autok") return BankStrategy::AutoK;
  if (s == "mean") return BankStrategy::Mean;
  if (s == "random") return BankStrategy::RandomSample;
  throw InvalidInput("unknown bank strategy '" + std::string(s) + "'");
}

void PrototypeBank::validate() const {
  if (pointers.empty() || pointers.front() != 0) throw InvalidInput("bank: pointer array must start at 0");
  if (pointers.size() != class_keys.size() + 1) throw InvalidInput("bank: pointer/class count mismatch");
  for (std::size_t c = 0; c + 1 < pointers.size(); ++c) {
    if (pointers[c + 1] <= pointers[c]) throw InvalidInput("bank: class without prototypes");
  }
  if (pointers.back() != num_prototypes()) throw InvalidInput("bank: pointer array does not cover P");
  if (prototypes.rows() > 0 && prototypes.cols() != dim) throw InvalidInput("bank: dim mismatch");
  require_unit_rows(prototypes, "bank");
  std::set<ClassKey> seen(class_keys.begin(), class_keys.end());
  if (seen.size() != class_keys.size()) throw InvalidInput("bank: duplicate class key");
}

bool PrototypeBank::operator==(const PrototypeBank& o) const {
  return dim == o.dim && prototypes.rows() == o.prototypes.rows() &&
         prototypes.cols() == o.prototypes.cols() && prototypes == o.prototypes &&
         pointers == o.pointers && class_keys == o.class_keys &&
         config.strategy == o.config.strategy && config.seed == o.config.seed;
}

Matrix class_prototypes(const Matrix& points, const ClassKey& key, const BankConfig& config) {
  if (points.rows() == 0) throw InvalidInput("class_prototypes: class without embeddings");
  switch (config.strategy) {
    case BankStrategy::AutoK: {
      const int k = auto_k(points, class_seed(config.seed, "autok", key), config.k_max,
                           config.sample_cap).k;
      return spherical_kmeans(points, k, class_seed(config.seed, "final", key), config.max_iters)
          .centroids;
    }
    case BankStrategy::Mean: {
      const Vector mean = points.colwise().sum().transpose();
      const Vector row = mean.norm() > 0.0 ? Vector(mean / mean.norm()) : Vector(points.row(0).transpose());
      return row.transpose();
    }
    case BankStrategy::RandomSample: {
      Rng rng(class_seed(config.seed, "random", key));
      auto rows = rng.sample_without_replacement(static_cast<std::size_t>(points.rows()),
                                                 config.random_protos);
      std::sort(rows.begin(), rows.end());
      return pick_rows(points, rows);
    }
  }
  throw InvalidInput("class_prototypes: unknown strategy");
}

namespace {

PrototypeBank append_classes(PrototypeBank bank, const LabeledEmbeddings& data) {
  if (static_cast<std::size_t>(data.embeddings.rows()) != data.keys.size()) {
    throw InvalidInput("bank: one key per embedding required");
  }
  if (data.keys.empty()) return bank;
  if (bank.dim == 0) bank.dim = data.embeddings.cols();
  if (data.embeddings.cols() != bank.dim) throw Incompatible("bank: embedding dim mismatch");
  require_unit_rows(data.embeddings, "bank");

  std::map<ClassKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.keys.size(); ++i) groups[data.keys[i]].push_back(i);
  std::set<ClassKey> existing(bank.class_keys.begin(), bank.class_keys.end());

  std::vector<Matrix> blocks;
  Eigen::Index added = 0;
  for (const auto& [key, rows] : groups) {
    if (existing.count(key)) {
      throw InvalidInput("bank: class (" + std::to_string(key.script) + ", " +
                         std::to_string(key.character) + ") already present");
    }
    blocks.push_back(class_prototypes(pick_rows(data.embeddings, rows), key, bank.config));
    added += blocks.back().rows();
    bank.class_keys.push_back(key);
    bank.pointers.push_back(bank.pointers.back() + static_cast<std::size_t>(blocks.back().rows()));
  }
  Matrix grown(bank.prototypes.rows() + added, bank.dim);
  grown.topRows(bank.prototypes.rows()) = bank.prototypes;
  Eigen::Index at = bank.prototypes.rows();
  for (const auto& b : blocks) {
    grown.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  bank.prototypes = std::move(grown);
  return bank;
}

}  // namespace

PrototypeBank build_bank(const LabeledEmbeddings& data, const BankConfig& config) {
  if (data.keys.empty()) throw InvalidInput("build_bank: no embeddings");
  PrototypeBank bank;
  bank.config = config;
  bank.dim = data.embeddings.cols();
  bank.prototypes.resize(0, bank.dim);
  return append_classes(std::move(bank), data);
}

PrototypeBank bank_extend(const PrototypeBank& bank, const LabeledEmbeddings& data) {
  return append_classes(bank, data);
}

std::vector<double> class_scores(const Vector& query, const PrototypeBank& bank) {
  if (bank.num_classes() == 0) throw InvalidInput("rank_classes: empty bank");
  if (query.size() != bank.dim) throw Incompatible("rank_classes: query dim mismatch");
  if (std::abs(query.norm() - 1.0) > kUnitNormTol) throw InvalidInput("rank_classes: query must be unit-norm");
  std::vector<double> scores(bank.num_classes());
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t r = bank.pointers[c]; r < bank.pointers[c + 1]; ++r) {
      best = std::max(best, bank.prototypes.row(static_cast<Eigen::Index>(r)).dot(query));
    }
    scores[c] = best;
  }
  return scores;
}

std::vector<ClassScore> rank_classes(const Vector& query, const PrototypeBank& bank,
                                     std::size_t top_k) {
  const auto scores = class_scores(query, bank);
  std::vector<ClassScore> all(scores.size());
  for (std::size_t c = 0; c < scores.size(); ++c) all[c] = {bank.class_keys[c], scores[c]};
  const std::size_t keep = std::min(top_k, all.size());
  auto better = [](const ClassScore& a, const ClassScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

void TextDictionary::validate() const {
  if (characters.empty()) throw InvalidInput("text dictionary is empty");
  if (static_cast<Eigen::Index>(characters.size()) != embeddings.rows()) {
    throw InvalidInput("text dictionary: one embedding per character required");
  }
  require_unit_rows(embeddings, "text dictionary");
}

std::vector<TextScore> zs_rank(const Vector& query, const TextDictionary& dict, std::size_t top_k) {
  dict.validate();
  if (query.size() != dict.embeddings.cols()) throw Incompatible("zs_rank: query dim mismatch");
  std::vector<TextScore> all(dict.size());
  for (std::size_t i = 0; i < dict.size(); ++i) {
    all[i] = {dict.characters[i], dict.embeddings.row(static_cast<Eigen::Index>(i)).dot(query)};
  }
  const std::size_t keep = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const TextScore& a, const TextScore& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.character < b.character;
                    });
  all.resize(keep);
  return all;
}

}  // namespace cret
