#pragma once

#include <cstddef>
#include <vector>

#include "cret/buffer.hpp"
#include "cret/manifest.hpp"
#include "cret/numerics.hpp"
#include "cret/rng.hpp"

namespace cret {

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr std::size_t kDefaultBatchSize = 128;

enum class PositiveSource { SameClassImage, MeaningText, ShapeText };

/// Relative weights of the three positive sources.
struct PositiveRatios {
  double image = 8.0;
  double meaning = 1.0;
  double shape = 1.0;
};

struct Positive {
  PositiveSource source = PositiveSource::SameClassImage;  // source actually used
  PositiveSource drawn = PositiveSource::SameClassImage;   // source the draw asked for
  std::size_t record = 0;                                  // manifest index of the positive
  bool fallback = false;
};

/// Draws exactly one positive for a training image. A missing text modality
/// falls back to a same-class image and emits a warning.
Positive sample_positive(std::size_t anchor, const ManifestIndex& index, Rng& rng,
                         const PositiveRatios& ratios = {});

/// Rows of `anchors` and `candidates` are unit-norm embeddings; candidate i
/// is the positive of anchor i and every candidate is a negative for the
/// other anchors.
struct ContrastiveBatch {
  Matrix anchors;
  Matrix candidates;
  std::vector<Modality> candidate_kinds;
  std::vector<bool> trainable;  // gradient flows into candidate j
};

struct InfoNceResult {
  double loss = 0.0;       // mean over anchors
  Matrix grad_anchors;     // B x D
  Matrix grad_candidates;  // B x D, zero rows where not trainable
};

/// Anchor-to-candidate InfoNCE with in-batch negatives.
InfoNceResult infonce_loss(const ContrastiveBatch& batch, double tau = kDefaultTemperature);

struct ReplayPair {
  std::size_t anchor = 0;    // index into MemoryBuffer::entries
  std::size_t positive = 0;
};

/// One epoch of replay pairs in batches of `batch_size`. Every buffered
/// image is an anchor once; its positive is another buffered image of the
/// same class, or itself when the class has a single buffered image.
std::vector<std::vector<ReplayPair>> phase2_pair_sampler(const MemoryBuffer& buffer, Rng& rng,
                                                         std::size_t batch_size = kDefaultBatchSize);

}  // namespace cret
