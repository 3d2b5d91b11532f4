#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cret/manifest.hpp"
#include "cret/numerics.hpp"

namespace cret {

/// The frozen map applied after the adapter insertion point: a fixed
/// orthogonal matrix followed by L2 normalization.
class PostMap {
 public:
  /// Pure normalization.
  static PostMap identity(Eigen::Index dim);
  /// Orthogonal factor of a seeded Gaussian matrix.
  static PostMap orthogonal(Eigen::Index dim, std::uint64_t seed);

  Eigen::Index dim() const { return dim_; }
  bool is_identity() const { return identity_; }
  std::uint64_t seed() const { return seed_; }
  const Matrix& matrix() const { return q_; }

  /// Throws DegenerateInput when the mapped vector is zero.
  Vector apply(const Vector& v) const;
  /// Linear part only (no normalization).
  Vector linear(const Vector& v) const;
  /// Vector-Jacobian product of apply() at `v`.
  Vector backward(const Vector& v, const Vector& upstream) const;

 private:
  Eigen::Index dim_ = 0;
  bool identity_ = true;
  std::uint64_t seed_ = 0;
  Matrix q_;
};

/// One row of an embeddings file.
struct EmbeddingRecord {
  std::string id;
  std::optional<std::string> script;
  std::optional<std::string> character;
  Modality kind = Modality::Image;
  Vector values;
};

/// Frozen backbone stand-in. Image records hold pre-insertion visual
/// features; text records hold final unit-norm text embeddings.
/// Immutable after construction; lookups are pure.
class EmbedProvider {
 public:
  /// Validates dims, finiteness, unique ids and unit-norm text records.
  EmbedProvider(std::vector<EmbeddingRecord> records, PostMap post_map);
  /// Empty provider; every lookup fails.
  explicit EmbedProvider(PostMap post_map);

  Eigen::Index dim() const { return post_map_.dim(); }
  std::size_t size() const { return records_.size(); }
  const PostMap& post_map() const { return post_map_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const EmbeddingRecord& record(const std::string& id) const;

  /// Pre-insertion feature of an image record.
  const Vector& visual_features(const std::string& id) const;
  /// Unit-norm embedding of a meaning or shape text.
  const Vector& text_embedding(const std::string& id) const;
  Vector post_map_apply(const Vector& v) const { return post_map_.apply(v); }

 private:
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  PostMap post_map_;
};

}  // namespace cret
