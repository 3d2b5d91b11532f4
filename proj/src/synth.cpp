#include "cret/synth.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <set>

#include "cret/error.hpp"
#include "cret/rng.hpp"

namespace cret {

namespace {

Vector gaussian(Eigen::Index n, Rng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Matrix orthonormal_columns(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

std::string char_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%04d", i);
  return buf;
}

struct ScriptModel {
  Matrix transform;
  Vector offset;
  Matrix nuisance;  // D x nuisance_rank, orthonormal columns
};

ScriptModel make_script(const SynthConfig& c, Rng& rng) {
  const Eigen::Index d = c.dim;
  const Eigen::Index m = std::min<Eigen::Index>(c.script_rank, d);
  ScriptModel s;
  const Matrix u = orthonormal_columns(d, m, rng);
  const Matrix rot = orthonormal_columns(m, m, rng);
  const Matrix partial =
      Matrix::Identity(d, d) + u * (rot - Matrix::Identity(m, m)) * u.transpose();
  s.transform = (1.0 - c.script_strength) * Matrix::Identity(d, d) + c.script_strength * partial;
  s.offset = c.script_offset * gaussian(d, rng);
  s.nuisance = orthonormal_columns(d, std::min<Eigen::Index>(c.nuisance_rank, d), rng);
  return s;
}

int draw_class_size(const SynthConfig& c, Rng& rng) {
  const int span = c.images_max - c.images_min + 1;
  const int extra = static_cast<int>(std::floor(span * std::pow(rng.uniform(), c.tail_power)));
  return c.images_min + std::min(extra, span - 1);
}

}  // namespace

void SynthConfig::validate() const {
  if (dim < 2) throw InvalidInput("synth: dim must be >= 2");
  if (scripts.empty()) throw InvalidInput("synth: no scripts");
  if (std::set<std::string>(scripts.begin(), scripts.end()).size() != scripts.size()) {
    throw InvalidInput("synth: duplicate script names");
  }
  if (chars_per_script < 1 || char_pool < chars_per_script) {
    throw InvalidInput("synth: need 1 <= chars_per_script <= char_pool");
  }
  if (modes_min < 1 || modes_max < modes_min) throw InvalidInput("synth: invalid style-mode range");
  if (images_min < 1 || images_max < images_min) throw InvalidInput("synth: invalid class-size range");
  if (test_fraction < 0.0 || test_fraction >= 1.0) throw InvalidInput("synth: test_fraction outside [0,1)");
  if (test_fraction > 0.0 && images_min < 2) {
    throw InvalidInput("synth: infeasible, test images requested but classes may be singletons");
  }
  if (zero_shot_chars < 0) throw InvalidInput("synth: negative zero_shot_chars");
  if (zero_shot_chars > 0 && zero_shot_threshold < 2) {
    throw InvalidInput("synth: zero_shot_threshold must be >= 2 to hold out any character");
  }
  if (images_min < zero_shot_threshold) {
    throw InvalidInput("synth: infeasible, regular classes would fall under the zero-shot threshold");
  }
  if (script_rank < 1 || nuisance_rank < 0) throw InvalidInput("synth: invalid subspace ranks");
  if (tail_power <= 0.0) throw InvalidInput("synth: tail_power must be positive");
  if (text_alignment < 0.0 || text_alignment > 1.0) throw InvalidInput("synth: text_alignment outside [0,1]");
  if (noise_scale < 0.0 || mode_scale < 0.0 || mode_skew < 0.0 || nuisance_scale < 0.0 || shape_noise < 0.0 ||
      script_offset < 0.0 || script_strength < 0.0 || script_strength > 1.0) {
    throw InvalidInput("synth: invalid scale parameter");
  }
}

std::uint64_t synth_post_map_seed(std::uint64_t seed) { return derive_seed(seed, "post_map"); }

SynthDataset generate(const SynthConfig& c) {
  c.validate();
  const Eigen::Index d = c.dim;
  Rng rng = Rng::keyed(c.seed, "synth");

  SynthDataset out{{}, {}, c.orthogonal_post_map ? PostMap::orthogonal(d, synth_post_map_seed(c.seed))
                                                 : PostMap::identity(d)};
  const PostMap& post = out.post_map;
  auto& records = out.manifest.records;
  auto& embeddings = out.embeddings;

  auto add = [&](Record r, Vector values) {
    EmbeddingRecord e;
    e.id = r.id;
    if (!r.script.empty()) e.script = r.script;
    if (!r.character.empty()) e.character = r.character;
    e.kind = r.kind;
    e.values = std::move(values);
    records.push_back(std::move(r));
    embeddings.push_back(std::move(e));
  };
  auto text_of = [&](const Vector& latent) { return post.apply(latent); };

  const int total_chars = c.char_pool + c.zero_shot_chars;
  std::vector<Vector> centroids;
  centroids.reserve(total_chars);
  for (int i = 0; i < total_chars; ++i) centroids.push_back(gaussian(d, rng));

  std::vector<ScriptModel> models;
  for (std::size_t s = 0; s < c.scripts.size(); ++s) models.push_back(make_script(c, rng));

  auto image_feature = [&](const ScriptModel& m, const Vector& latent) {
    Vector f = m.transform * latent + m.offset;
    if (m.nuisance.cols() > 0) f += c.nuisance_scale * (m.nuisance * gaussian(m.nuisance.cols(), rng));
    return f;
  };

  std::vector<bool> used(total_chars, false);
  for (std::size_t s = 0; s < c.scripts.size(); ++s) {
    const std::string& script = c.scripts[s];
    auto picks = rng.sample_without_replacement(c.char_pool, c.chars_per_script);
    std::sort(picks.begin(), picks.end());
    for (std::size_t ch : picks) {
      used[ch] = true;
      const std::string cname = char_name(static_cast<int>(ch));
      const int modes = c.modes_min + static_cast<int>(rng.below(c.modes_max - c.modes_min + 1));
      std::vector<Vector> mode_offsets;
      std::vector<double> mode_cdf;
      double mass = 0.0;
      for (int k = 0; k < modes; ++k) {
        mode_offsets.push_back(c.mode_scale * gaussian(d, rng));
        mass += std::exp(c.mode_skew * rng.normal());
        mode_cdf.push_back(mass);
      }
      auto pick_mode = [&] {
        const double u = rng.uniform() * mass;
        const auto it = std::upper_bound(mode_cdf.begin(), mode_cdf.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - mode_cdf.begin()), mode_offsets.size() - 1);
      };
      const int n = draw_class_size(c, rng);
      int n_test = 0;
      if (c.test_fraction > 0.0 && n >= 2) {
        n_test = std::clamp(static_cast<int>(std::lround(c.test_fraction * n)), 1, n - 1);
      }
      std::vector<std::size_t> order = rng.sample_without_replacement(n, n);
      std::vector<Split> split_of(n, Split::Train);
      for (int k = 0; k < n_test; ++k) split_of[order[k]] = Split::Test;
      for (int k = 0; k < n; ++k) {
        const Vector latent =
            centroids[ch] + mode_offsets[pick_mode()] + c.noise_scale * gaussian(d, rng);
        Record img{"img/" + script + "/" + cname + "/" + std::to_string(k), script, cname,
                   Modality::Image, split_of[k], ""};
        const std::string img_id = img.id;
        const Split split = img.split;
        add(std::move(img), image_feature(models[s], latent));
        add(Record{"shape/" + img_id, script, cname, Modality::Shape, split, img_id},
            text_of(latent + c.shape_noise * gaussian(d, rng)));
      }
    }
  }

  const double a = c.text_alignment;
  const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
  for (int ch = 0; ch < c.char_pool; ++ch) {
    if (!used[ch]) continue;
    const std::string cname = char_name(ch);
    add(Record{"meaning/" + cname, "", cname, Modality::Meaning, Split::Train, ""},
        text_of(a * centroids[ch] + b * gaussian(d, rng)));
  }

  for (int z = 0; z < c.zero_shot_chars; ++z) {
    const int ch = c.char_pool + z;
    const std::string cname = char_name(ch);
    const std::size_t s = rng.below(c.scripts.size());
    const std::string& script = c.scripts[s];
    const int n = 1 + static_cast<int>(rng.below(c.zero_shot_threshold - 1));
    const Vector style = c.mode_scale * gaussian(d, rng);
    for (int k = 0; k < n; ++k) {
      const Vector latent = centroids[ch] + style + c.noise_scale * gaussian(d, rng);
      add(Record{"img/" + script + "/" + cname + "/" + std::to_string(k), script, cname,
                 Modality::Image, Split::ZeroShot, ""},
          image_feature(models[s], latent));
    }
    add(Record{"meaning/" + cname, "", cname, Modality::Meaning, Split::ZeroShot, ""},
        text_of(a * centroids[ch] + b * gaussian(d, rng)));
  }
  return out;
}

DatasetSummary summarize(const DatasetManifest& manifest) {
  DatasetSummary s;
  std::map<std::string, std::map<Split, std::set<std::string>>> classes;
  std::map<Split, std::set<std::pair<std::string, std::string>>> total_classes;
  std::map<std::pair<std::string, std::string>, std::size_t> class_size;
  for (const auto& r : manifest.records) {
    if (r.kind != Modality::Image) continue;
    if (std::find(s.scripts.begin(), s.scripts.end(), r.script) == s.scripts.end()) {
      s.scripts.push_back(r.script);
    }
    s.per_script[r.script][r.split].images++;
    s.totals[r.split].images++;
    classes[r.script][r.split].insert(r.character);
    total_classes[r.split].insert({r.script, r.character});
    if (r.split != Split::ZeroShot) class_size[{r.script, r.character}]++;
  }
  for (auto& [script, by_split] : classes) {
    for (auto& [split, set] : by_split) s.per_script[script][split].classes = set.size();
  }
  for (auto& [split, set] : total_classes) s.totals[split].classes = set.size();
  for (const auto& [key, n] : class_size) {
    s.min_class_images = s.min_class_images == 0 ? n : std::min(s.min_class_images, n);
    s.max_class_images = std::max(s.max_class_images, n);
  }
  return s;
}

void print_summary(std::ostream& os, const DatasetSummary& s) {
  const Split splits[] = {Split::Train, Split::Test, Split::ZeroShot};
  os << std::left << std::setw(8) << "script";
  for (Split sp : splits) os << std::right << std::setw(12) << (std::string(to_string(sp)) + " img")
                             << std::setw(12) << (std::string(to_string(sp)) + " cls");
  os << '\n';
  auto row = [&](const std::string& name, const std::map<Split, SplitCounts>& counts) {
    os << std::left << std::setw(8) << name;
    for (Split sp : splits) {
      auto it = counts.find(sp);
      const SplitCounts c = it == counts.end() ? SplitCounts{} : it->second;
      os << std::right << std::setw(12) << c.images << std::setw(12) << c.classes;
    }
    os << '\n';
  };
  for (const auto& name : s.scripts) row(name, s.per_script.at(name));
  row("total", s.totals);
}

}  // namespace cret
