#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cret/config.hpp"
#include "cret/engine.hpp"
#include "cret/manifest.hpp"
#include "cret/metrics.hpp"
#include "cret/provider.hpp"

namespace cret {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Embeddings file: one JSON object per line,
/// {"id", "script", "char", "kind", "dim", "values"}.
std::string embeddings_to_jsonl(const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> embeddings_from_jsonl(std::istream& in);
void write_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

/// Manifest file: one JSON object per line,
/// {"id", "script", "char", "kind", "split"[, "of"]}.
std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(std::istream& in);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads and validates an embeddings file (dims, finiteness, unique ids,
/// unit-norm text records).
EmbedProvider load_file_provider(const std::filesystem::path& path, PostMap post_map);
/// Same, with the post map dimension taken from the file (identity if empty).
EmbedProvider load_file_provider(const std::filesystem::path& path, PostMapKind kind,
                                 std::uint64_t seed);

PostMap make_post_map(PostMapKind kind, Eigen::Index dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const json& j);
json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j);
RunConfig read_run_config(const std::filesystem::path& path);

/// SHA-256 hex digest of the canonical (sorted-key, compact) JSON form.
std::string config_digest(const RunConfig& config);

// ---------------------------------------------------------------------------
// Model state
// ---------------------------------------------------------------------------

json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);
json to_json(const SiaParams& p);
SiaParams sia_from_json(const json& j);
json to_json(const RouterParams& p);
RouterParams router_from_json(const json& j);
json to_json(const PrototypeBank& b);
PrototypeBank bank_from_json(const json& j);

/// One stage's checkpoint: model state, bank, buffer and the stage's
/// evaluation row.
struct Checkpoint {
  StageState state;
  PostMapKind post_map = PostMapKind::Identity;
  std::uint64_t post_map_seed = 0;
  Eigen::Index dim = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  StageResult row;
};

json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const json& j);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

json to_json(const MetricsReport& r);
MetricsReport report_from_json(const json& j);
std::string report_to_csv(const MetricsReport& r);
void print_report(std::ostream& os, const MetricsReport& r);
void write_report(const std::filesystem::path& dir, const MetricsReport& r);

}  // namespace cret
