#pragma once

#include <cstdint>

#include "cret/dictionary.hpp"
#include "oracles.hpp"

namespace fixture {

using cret::Matrix;
using cret::Vector;

/// `per_mode` unit points around each of `modes` random unit centers, with
/// per-coordinate noise `spread`.
inline Matrix mode_class(std::uint64_t seed, int modes, int per_mode, Eigen::Index dim = 16,
                         double spread = 0.05, Matrix* centers = nullptr) {
  cret::Rng rng(seed);
  Matrix c(modes, dim);
  for (int m = 0; m < modes; ++m) c.row(m) = oracle::random_unit(dim, rng).transpose();
  Matrix pts(modes * per_mode, dim);
  for (int m = 0; m < modes; ++m) {
    for (int i = 0; i < per_mode; ++i) {
      const Vector v = c.row(m).transpose() + oracle::random_vector(dim, rng, spread);
      pts.row(m * per_mode + i) = v.normalized().transpose();
    }
  }
  if (centers) *centers = c;
  return pts;
}

/// `classes` classes of 1..6 random unit points each, keys spread over three scripts.
inline cret::LabeledEmbeddings random_classes(std::uint64_t seed, int classes, Eigen::Index dim = 16,
                                              int first_character = 0) {
  cret::Rng rng(seed);
  cret::LabeledEmbeddings out;
  std::vector<Vector> rows;
  for (int c = 0; c < classes; ++c) {
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      rows.push_back(oracle::random_unit(dim, rng));
      out.keys.push_back({c % 3, first_character + c});
    }
  }
  out.embeddings.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) out.embeddings.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

}  // namespace fixture
