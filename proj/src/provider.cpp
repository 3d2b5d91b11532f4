#include "cret/provider.hpp"

#include <Eigen/QR>
#include <cmath>

#include "cret/error.hpp"
#include "cret/rng.hpp"

namespace cret {

PostMap PostMap::identity(Eigen::Index dim) {
  if (dim < 0) throw InvalidInput("PostMap: negative dim");
  PostMap m;
  m.dim_ = dim;
  m.identity_ = true;
  return m;
}

PostMap PostMap::orthogonal(Eigen::Index dim, std::uint64_t seed) {
  if (dim <= 0) throw InvalidInput("PostMap: dim must be positive");
  Rng rng(seed);
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  // Fix column signs so the factor is unique for a given Gaussian draw.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  PostMap m;
  m.dim_ = dim;
  m.identity_ = false;
  m.seed_ = seed;
  m.q_ = std::move(q);
  return m;
}

Vector PostMap::linear(const Vector& v) const {
  if (v.size() != dim_) throw InvalidInput("post_map: dimension mismatch");
  return identity_ ? v : Vector(q_ * v);
}

Vector PostMap::apply(const Vector& v) const {
  if (!v.allFinite()) throw InvalidInput("post_map: non-finite input");
  const Vector y = linear(v);
  if (!(y.norm() > 0.0)) throw DegenerateInput("post_map: zero vector after the frozen map");
  return l2_normalize(y);
}

Vector PostMap::backward(const Vector& v, const Vector& upstream) const {
  const Vector y = linear(v);
  const Vector g = l2_normalize_backward(y, upstream);
  return identity_ ? g : Vector(q_.transpose() * g);
}

EmbedProvider::EmbedProvider(PostMap post_map) : post_map_(std::move(post_map)) {}

EmbedProvider::EmbedProvider(std::vector<EmbeddingRecord> records, PostMap post_map)
    : records_(std::move(records)), post_map_(std::move(post_map)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.values.size() != post_map_.dim()) {
      throw Incompatible("embedding '" + r.id + "' has dim " + std::to_string(r.values.size()) +
                         ", expected " + std::to_string(post_map_.dim()));
    }
    if (!r.values.allFinite()) throw ParseError("embedding '" + r.id + "' has non-finite values");
    if (r.kind != Modality::Image && std::abs(r.values.norm() - 1.0) > kUnitNormTol) {
      throw ParseError("text embedding '" + r.id + "' is not unit-norm");
    }
    if (!index_.emplace(r.id, i).second) throw ParseError("duplicate embedding id '" + r.id + "'");
  }
}

const EmbeddingRecord& EmbedProvider::record(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidInput("unknown embedding id '" + id + "'");
  return records_[it->second];
}

const Vector& EmbedProvider::visual_features(const std::string& id) const {
  const auto& r = record(id);
  if (r.kind != Modality::Image) throw InvalidInput("'" + id + "' is not an image record");
  return r.values;
}

const Vector& EmbedProvider::text_embedding(const std::string& id) const {
  const auto& r = record(id);
  if (r.kind == Modality::Image) throw InvalidInput("'" + id + "' is not a text record");
  return r.values;
}

}  // namespace cret
