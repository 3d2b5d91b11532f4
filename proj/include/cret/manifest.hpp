#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cret {

enum class Modality { Image, Meaning, Shape };
enum class Split { Train, Test, ZeroShot };

std::string_view to_string(Modality m);
std::string_view to_string(Split s);
Modality parse_modality(std::string_view s);
Split parse_split(std::string_view s);

/// One row of a dataset manifest. Meaning texts carry no script; shape texts
/// point at the image they describe through `of`.
struct Record {
  std::string id;
  std::string script;
  std::string character;
  Modality kind = Modality::Image;
  Split split = Split::Train;
  std::string of;

  bool operator==(const Record&) const = default;
};

struct DatasetManifest {
  std::vector<Record> records;
};

/// (script, character) identity of a class. The same character under two
/// scripts is two classes. Ordered by (script, character).
struct ClassKey {
  int script = 0;
  int character = 0;

  auto operator<=>(const ClassKey&) const = default;
};

/// Lookup tables over a manifest, in terms of record indices.
class ManifestIndex {
 public:
  explicit ManifestIndex(const DatasetManifest& manifest);

  const DatasetManifest& manifest() const { return *manifest_; }
  const Record& record(std::size_t i) const { return manifest_->records.at(i); }

  std::optional<std::size_t> find(std::string_view id) const;

  /// Train images of one script-aware class, in manifest order.
  const std::vector<std::size_t>& class_train_images(const std::string& script,
                                                     const std::string& character) const;
  std::optional<std::size_t> meaning_of(const std::string& character) const;
  std::optional<std::size_t> shape_of(const std::string& image_id) const;

  /// Image records of `script` in `split`, in manifest order.
  std::vector<std::size_t> images(const std::string& script, Split split) const;
  std::vector<std::size_t> images(Split split) const;

  /// Scripts in order of first appearance.
  const std::vector<std::string>& scripts() const { return scripts_; }

 private:
  const DatasetManifest* manifest_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> class_train_;
  std::unordered_map<std::string, std::size_t> meaning_;
  std::unordered_map<std::string, std::size_t> shape_;
  std::vector<std::string> scripts_;
};

}  // namespace cret
