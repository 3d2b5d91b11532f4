#include "cret/manifest.hpp"

#include <algorithm>

#include "cret/error.hpp"

namespace cret {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Meaning: return "meaning";
    case Modality::Shape: return "shape";
  }
  return "image";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::ZeroShot: return "zero-shot";
  }
  return "train";
}

Modality parse_modality(std::string_view s) {
  if (s == "image") return Modality::Image;
  if (s == "meaning") return Modality::Meaning;
  if (s == "shape") return Modality::Shape;
  throw ParseError("unknown modality '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "zero-shot") return Split::ZeroShot;
  throw ParseError("unknown split '" + std::string(s) + "'");
}

ManifestIndex::ManifestIndex(const DatasetManifest& manifest) : manifest_(&manifest) {
  const auto& recs = manifest.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const Record& r = recs[i];
    if (!by_id_.emplace(r.id, i).second) throw InvalidInput("manifest: duplicate id '" + r.id + "'");
    if (!r.script.empty() && std::find(scripts_.begin(), scripts_.end(), r.script) == scripts_.end()) {
      scripts_.push_back(r.script);
    }
    switch (r.kind) {
      case Modality::Image:
        if (r.split == Split::Train) class_train_[{r.script, r.character}].push_back(i);
        break;
      case Modality::Meaning:
        meaning_.emplace(r.character, i);
        break;
      case Modality::Shape:
        shape_.emplace(r.of, i);
        break;
    }
  }
}

std::optional<std::size_t> ManifestIndex::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::size_t>& ManifestIndex::class_train_images(const std::string& script,
                                                                  const std::string& character) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = class_train_.find({script, character});
  return it == class_train_.end() ? kEmpty : it->second;
}

std::optional<std::size_t> ManifestIndex::meaning_of(const std::string& character) const {
  auto it = meaning_.find(character);
  if (it == meaning_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ManifestIndex::shape_of(const std::string& image_id) const {
  auto it = shape_.find(image_id);
  if (it == shape_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> ManifestIndex::images(const std::string& script, Split split) const {
  std::vector<std::size_t> out;
  const auto& recs = manifest_->records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].kind == Modality::Image && recs[i].split == split && recs[i].script == script) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> ManifestIndex::images(Split split) const {
  std::vector<std::size_t> out;
  const auto& recs = manifest_->records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].kind == Modality::Image && recs[i].split == split) out.push_back(i);
  }
  return out;
}

}  // namespace cret
