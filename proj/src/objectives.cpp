#include "cret/objectives.hpp"

#include <cmath>
#include <map>
#include <string>

#include "cret/error.hpp"
#include "cret/log.hpp"

namespace cret {

namespace {

std::size_t other_same_class(std::size_t anchor, const ManifestIndex& index, Rng& rng) {
  const Record& r = index.record(anchor);
  const auto& members = index.class_train_images(r.script, r.character);
  if (members.size() <= 1) return anchor;
  std::size_t pick = rng.below(members.size() - 1);
  // Skip over the anchor's own slot.
  if (members[pick] == anchor) pick = members.size() - 1;
  return members[pick];
}

}  // namespace

Positive sample_positive(std::size_t anchor, const ManifestIndex& index, Rng& rng,
                         const PositiveRatios& ratios) {
  const Record& r = index.record(anchor);
  if (r.kind != Modality::Image || r.split != Split::Train) {
    throw InvalidInput("sample_positive: anchor '" + r.id + "' is not a training image");
  }
  const double total = ratios.image + ratios.meaning + ratios.shape;
  if (!(total > 0.0) || ratios.image < 0.0 || ratios.meaning < 0.0 || ratios.shape < 0.0) {
    throw InvalidInput("sample_positive: invalid source ratios");
  }
  const double u = rng.uniform() * total;
  Positive p;
  if (u < ratios.image) {
    p.drawn = PositiveSource::SameClassImage;
  } else if (u < ratios.image + ratios.meaning) {
    p.drawn = PositiveSource::MeaningText;
  } else {
    p.drawn = PositiveSource::ShapeText;
  }

  std::optional<std::size_t> text;
  if (p.drawn == PositiveSource::MeaningText) text = index.meaning_of(r.character);
  if (p.drawn == PositiveSource::ShapeText) text = index.shape_of(r.id);

  if (p.drawn != PositiveSource::SameClassImage && text) {
    p.source = p.drawn;
    p.record = *text;
    return p;
  }
  if (p.drawn != PositiveSource::SameClassImage) {
    p.fallback = true;
    log_warning("no " + std::string(p.drawn == PositiveSource::MeaningText ? "meaning" : "shape") +
                " text for '" + r.id + "', using a same-class image");
  }
  p.source = PositiveSource::SameClassImage;
  p.record = other_same_class(anchor, index, rng);
  return p;
}

InfoNceResult infonce_loss(const ContrastiveBatch& batch, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("infonce_loss: temperature must be positive");
  const Eigen::Index b = batch.anchors.rows();
  if (b == 0) throw InvalidInput("infonce_loss: empty batch");
  if (batch.candidates.rows() != b || batch.candidates.cols() != batch.anchors.cols()) {
    throw InvalidInput("infonce_loss: anchors and candidates differ in shape");
  }
  if (batch.candidate_kinds.size() != static_cast<std::size_t>(b) ||
      batch.trainable.size() != static_cast<std::size_t>(b)) {
    throw InvalidInput("infonce_loss: candidate metadata has the wrong length");
  }
  for (Eigen::Index i = 0; i < b; ++i) {
    if (std::abs(batch.anchors.row(i).norm() - 1.0) > kUnitNormTol ||
        std::abs(batch.candidates.row(i).norm() - 1.0) > kUnitNormTol) {
      throw InvalidInput("infonce_loss: embeddings must be unit-norm");
    }
    if (batch.trainable[i] && batch.candidate_kinds[i] != Modality::Image) {
      throw ProtocolError("infonce_loss: text candidates are frozen and cannot be trainable");
    }
  }

  const Matrix logits = (batch.anchors * batch.candidates.transpose()) / tau;
  Matrix dlogits(b, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (logits.row(i).array() - m).exp().transpose();
    const double z = ex.sum();
    total += m + std::log(z) - logits(i, i);
    dlogits.row(i) = (ex / z).matrix().transpose();
    dlogits(i, i) -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  dlogits *= inv_b / tau;

  InfoNceResult out;
  out.loss = total * inv_b;
  out.grad_anchors = dlogits * batch.candidates;
  out.grad_candidates = dlogits.transpose() * batch.anchors;
  for (Eigen::Index j = 0; j < b; ++j) {
    if (!batch.trainable[j]) out.grad_candidates.row(j).setZero();
  }
  return out;
}

std::vector<std::vector<ReplayPair>> phase2_pair_sampler(const MemoryBuffer& buffer, Rng& rng,
                                                         std::size_t batch_size) {
  if (buffer.entries.empty()) throw ProtocolError("phase2_pair_sampler: empty buffer");
  if (batch_size == 0) throw InvalidInput("phase2_pair_sampler: batch size must be positive");

  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < buffer.entries.size(); ++i) {
    classes[{buffer.entries[i].script, buffer.entries[i].character}].push_back(i);
  }
  std::vector<std::size_t> order(buffer.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<std::vector<ReplayPair>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<ReplayPair> batch;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
      const std::size_t a = order[k];
      const auto& members = classes.at({buffer.entries[a].script, buffer.entries[a].character});
      std::size_t pos = a;
      if (members.size() > 1) {
        std::size_t pick = rng.below(members.size() - 1);
        if (members[pick] == a) pick = members.size() - 1;
        pos = members[pick];
      }
      batch.push_back({a, pos});
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace cret
