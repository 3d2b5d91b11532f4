#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cret/manifest.hpp"
#include "cret/provider.hpp"

namespace cret {

inline const std::vector<std::string> kCanonicalScripts = {"CS", "WSC", "SAC", "SS", "BI", "OBC"};

/// Parameters of the seeded multi-script benchmark generator.
///
/// Each character owns a latent centroid; each (script, character) class
/// owns 1..modes_max style offsets; each script applies a partial rotation
/// mixed with the identity, a script signature offset, and nuisance
/// variation in its own low-rank subspace.
struct SynthConfig {
  int dim = 64;
  std::vector<std::string> scripts = kCanonicalScripts;
  int chars_per_script = 40;
  int char_pool = 60;            // characters shared across scripts are drawn from this pool
  int modes_min = 1;
  int modes_max = 4;
  int images_min = 6;
  int images_max = 30;
  double tail_power = 2.5;       // > 1 skews class sizes toward images_min
  double test_fraction = 0.2;
  int zero_shot_chars = 30;
  int zero_shot_threshold = 5;   // characters with fewer images in total are held out
  double mode_scale = 0.8;
  double mode_skew = 0.0;        // log-normal spread of per-class style-mode frequencies; 0 = uniform
  double noise_scale = 0.5;
  double script_strength = 0.5;
  int script_rank = 16;
  double script_offset = 1.0;
  int nuisance_rank = 6;
  double nuisance_scale = 2.0;
  double text_alignment = 0.8;
  double shape_noise = 0.3;
  bool orthogonal_post_map = true;
  std::uint64_t seed = 0;

  /// Throws InvalidInput for infeasible settings.
  void validate() const;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<EmbeddingRecord> embeddings;
  PostMap post_map;
};

SynthDataset generate(const SynthConfig& config);

/// Seed of the frozen post map the generator uses for a run seed.
std::uint64_t synth_post_map_seed(std::uint64_t seed);

struct SplitCounts {
  std::size_t images = 0;
  std::size_t classes = 0;
};

struct DatasetSummary {
  std::vector<std::string> scripts;  // row order
  std::map<std::string, std::map<Split, SplitCounts>> per_script;
  std::map<Split, SplitCounts> totals;
  std::size_t min_class_images = 0;  // over train+test classes
  std::size_t max_class_images = 0;
};

DatasetSummary summarize(const DatasetManifest& manifest);
void print_summary(std::ostream& os, const DatasetSummary& summary);

}  // namespace cret
