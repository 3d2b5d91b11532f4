#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cret/manifest.hpp"
#include "cret/numerics.hpp"

namespace cret {

inline constexpr int kDefaultKMax = 32;
inline constexpr std::size_t kDefaultSampleCap = 256;
inline constexpr int kDefaultKMeansIters = 100;
inline constexpr std::size_t kDefaultRandomProtos = 8;

// ---------------------------------------------------------------------------
// Spherical k-means and cosine silhouette
// ---------------------------------------------------------------------------

struct ClusteringResult {
  Matrix centroids;                    // k x D, unit rows
  std::vector<int> assignments;        // per point
  double inertia = 0.0;                // mean (1 - cos) to the assigned centroid
  std::vector<double> inertia_history; // after every centroid update
  int iterations = 0;
};

/// Rows of `points` must be unit-norm. k-means++ seeding under cosine
/// distance; empty clusters seize the point farthest from its centroid.
ClusteringResult spherical_kmeans(const Matrix& points, int k, std::uint64_t seed,
                                  int max_iters = kDefaultKMeansIters);

/// Mean cosine silhouette. Labels must cover 0..K-1 with K >= 2; singleton
/// clusters contribute 0.
double silhouette_cos(const Matrix& points, const std::vector<int>& assignments);

struct AutoKResult {
  int k = 1;
  int k_max = 1;                 // min(K_max, floor(sqrt(n)))
  std::vector<double> scores;    // silhouette for k = 2..k_max
};

AutoKResult auto_k(const Matrix& points, std::uint64_t seed, int k_max = kDefaultKMax,
                   std::size_t sample_cap = kDefaultSampleCap);

// ---------------------------------------------------------------------------
// Prototype bank
// ---------------------------------------------------------------------------

enum class BankStrategy { AutoK, Mean, RandomSample };

std::string_view to_string(BankStrategy s);
BankStrategy parse_bank_strategy(std::string_view s);

struct BankConfig {
  BankStrategy strategy = BankStrategy::AutoK;
  int k_max = kDefaultKMax;
  std::size_t sample_cap = kDefaultSampleCap;
  std::size_t random_protos = kDefaultRandomProtos;
  int max_iters = kDefaultKMeansIters;
  std::uint64_t seed = 0;
};

struct LabeledEmbeddings {
  Matrix embeddings;           // N x D, unit rows
  std::vector<ClassKey> keys;  // N
};

/// Flattened prototypes; class c owns rows pointers[c] .. pointers[c+1].
struct PrototypeBank {
  Eigen::Index dim = 0;
  Matrix prototypes;
  std::vector<std::size_t> pointers{0};
  std::vector<ClassKey> class_keys;
  BankConfig config;

  std::size_t num_classes() const { return class_keys.size(); }
  std::size_t num_prototypes() const { return static_cast<std::size_t>(prototypes.rows()); }
  /// Throws InvalidInput if any structural invariant fails.
  void validate() const;

  bool operator==(const PrototypeBank& o) const;
};

/// Prototypes of one class under the configured strategy.
Matrix class_prototypes(const Matrix& points, const ClassKey& key, const BankConfig& config);

/// Classes are processed in sorted key order.
PrototypeBank build_bank(const LabeledEmbeddings& data, const BankConfig& config);

/// Appends new classes (sorted among themselves); existing rows untouched.
PrototypeBank bank_extend(const PrototypeBank& bank, const LabeledEmbeddings& data);

struct ClassScore {
  ClassKey key;
  double score = 0.0;
};

/// Class score = max cosine over its prototypes; descending, ties by key.
std::vector<ClassScore> rank_classes(const Vector& query, const PrototypeBank& bank,
                                     std::size_t top_k);

/// Per-class maximum score, in bank order.
std::vector<double> class_scores(const Vector& query, const PrototypeBank& bank);

// ---------------------------------------------------------------------------
// Zero-shot text dictionary
// ---------------------------------------------------------------------------

struct TextDictionary {
  std::vector<std::string> characters;
  Matrix embeddings;  // one unit row per character

  std::size_t size() const { return characters.size(); }
  void validate() const;
};

struct TextScore {
  std::string character;
  double score = 0.0;
};

/// Ranks meaning texts against an already-embedded unit query.
std::vector<TextScore> zs_rank(const Vector& query, const TextDictionary& dict, std::size_t top_k);

}  // namespace cret
