#include "cret/io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "cret/error.hpp"

namespace cret {

namespace fs = std::filesystem;

namespace {

template <class F>
auto parse_guard(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

json opt_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }
json opt_string(const std::string& s) { return s.empty() ? json(nullptr) : json(s); }

std::string str_or_empty(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  return j.at(key).get<std::string>();
}

json vec_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json opt_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_double_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string post_map_name(PostMapKind k) { return k == PostMapKind::Identity ? "identity" : "orthogonal"; }
PostMapKind parse_post_map(const std::string& s) {
  if (s == "identity") return PostMapKind::Identity;
  if (s == "orthogonal") return PostMapKind::Orthogonal;
  throw ParseError("unknown post_map '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string embeddings_to_jsonl(const std::vector<EmbeddingRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["script"] = opt_string(r.script);
    j["char"] = opt_string(r.character);
    j["kind"] = std::string(to_string(r.kind));
    j["dim"] = r.values.size();
    j["values"] = vec_to_json(r.values);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<EmbeddingRecord> embeddings_from_jsonl(std::istream& in) {
  std::vector<EmbeddingRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "embeddings line " + std::to_string(lineno);
    out.push_back(parse_guard(where, [&] {
      const json j = json::parse(line);
      EmbeddingRecord r;
      r.id = j.at("id").get<std::string>();
      const std::string script = str_or_empty(j, "script");
      const std::string ch = str_or_empty(j, "char");
      if (!script.empty()) r.script = script;
      if (!ch.empty()) r.character = ch;
      r.kind = parse_modality(j.at("kind").get<std::string>());
      r.values = vec_from_json(j.at("values"));
      const auto declared = j.at("dim").get<Eigen::Index>();
      if (declared != r.values.size()) throw ParseError(where + ": dim does not match values");
      if (dim < 0) dim = declared;
      if (declared != dim) throw ParseError(where + ": dim " + std::to_string(declared) +
                                            " differs from " + std::to_string(dim));
      if (!r.values.allFinite()) throw ParseError(where + ": non-finite value");
      if (!ids.insert(r.id).second) throw ParseError(where + ": duplicate id '" + r.id + "'");
      return r;
    }));
  }
  return out;
}

void write_embeddings(const fs::path& path, const std::vector<EmbeddingRecord>& records) {
  write_file_atomic(path, embeddings_to_jsonl(records));
}

std::vector<EmbeddingRecord> read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return embeddings_from_jsonl(in);
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    json j;
    j["id"] = r.id;
    j["script"] = opt_string(r.script);
    j["char"] = opt_string(r.character);
    j["kind"] = std::string(to_string(r.kind));
    j["split"] = std::string(to_string(r.split));
    if (!r.of.empty()) j["of"] = r.of;
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::istream& in) {
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    m.records.push_back(parse_guard("manifest line " + std::to_string(lineno), [&] {
      const json j = json::parse(line);
      Record r;
      r.id = j.at("id").get<std::string>();
      r.script = str_or_empty(j, "script");
      r.character = str_or_empty(j, "char");
      r.kind = parse_modality(j.at("kind").get<std::string>());
      r.split = parse_split(j.at("split").get<std::string>());
      r.of = str_or_empty(j, "of");
      return r;
    }));
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  write_file_atomic(path, manifest_to_jsonl(manifest));
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return manifest_from_jsonl(in);
}

PostMap make_post_map(PostMapKind kind, Eigen::Index dim, std::uint64_t seed) {
  return kind == PostMapKind::Identity ? PostMap::identity(dim) : PostMap::orthogonal(dim, seed);
}

EmbedProvider load_file_provider(const fs::path& path, PostMap post_map) {
  return EmbedProvider(read_embeddings(path), std::move(post_map));
}

EmbedProvider load_file_provider(const fs::path& path, PostMapKind kind, std::uint64_t seed) {
  auto records = read_embeddings(path);
  if (records.empty()) return EmbedProvider(PostMap::identity(0));
  const auto dim = records.front().values.size();
  return EmbedProvider(std::move(records), make_post_map(kind, dim, seed));
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

json to_json(const SynthConfig& c) {
  return json{{"dim", c.dim},
              {"scripts", c.scripts},
              {"chars_per_script", c.chars_per_script},
              {"char_pool", c.char_pool},
              {"modes_min", c.modes_min},
              {"modes_max", c.modes_max},
              {"images_min", c.images_min},
              {"images_max", c.images_max},
              {"tail_power", c.tail_power},
              {"test_fraction", c.test_fraction},
              {"zero_shot_chars", c.zero_shot_chars},
              {"zero_shot_threshold", c.zero_shot_threshold},
              {"mode_scale", c.mode_scale},
              {"mode_skew", c.mode_skew},
              {"noise_scale", c.noise_scale},
              {"script_strength", c.script_strength},
              {"script_rank", c.script_rank},
              {"script_offset", c.script_offset},
              {"nuisance_rank", c.nuisance_rank},
              {"nuisance_scale", c.nuisance_scale},
              {"text_alignment", c.text_alignment},
              {"shape_noise", c.shape_noise},
              {"orthogonal_post_map", c.orthogonal_post_map},
              {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
  return parse_guard("synth config", [&] {
    SynthConfig c;
    c.dim = j.value("dim", c.dim);
    c.scripts = j.value("scripts", c.scripts);
    c.chars_per_script = j.value("chars_per_script", c.chars_per_script);
    c.char_pool = j.value("char_pool", c.char_pool);
    c.modes_min = j.value("modes_min", c.modes_min);
    c.modes_max = j.value("modes_max", c.modes_max);
    c.images_min = j.value("images_min", c.images_min);
    c.images_max = j.value("images_max", c.images_max);
    c.tail_power = j.value("tail_power", c.tail_power);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.zero_shot_chars = j.value("zero_shot_chars", c.zero_shot_chars);
    c.zero_shot_threshold = j.value("zero_shot_threshold", c.zero_shot_threshold);
    c.mode_scale = j.value("mode_scale", c.mode_scale);
    c.mode_skew = j.value("mode_skew", c.mode_skew);
    c.noise_scale = j.value("noise_scale", c.noise_scale);
    c.script_strength = j.value("script_strength", c.script_strength);
    c.script_rank = j.value("script_rank", c.script_rank);
    c.script_offset = j.value("script_offset", c.script_offset);
    c.nuisance_rank = j.value("nuisance_rank", c.nuisance_rank);
    c.nuisance_scale = j.value("nuisance_scale", c.nuisance_scale);
    c.text_alignment = j.value("text_alignment", c.text_alignment);
    c.shape_noise = j.value("shape_noise", c.shape_noise);
    c.orthogonal_post_map = j.value("orthogonal_post_map", c.orthogonal_post_map);
    c.seed = j.value("seed", c.seed);
    return c;
  });
}

json to_json(const RunConfig& c) {
  const auto& t = c.train;
  json train{{"phase1_epochs", t.phase1_epochs},
             {"phase2_epochs", t.phase2_epochs},
             {"batch_size", t.batch_size},
             {"tau", t.tau},
             {"lr", t.lr},
             {"weight_decay", t.weight_decay},
             {"warmup_ratio", t.warmup_ratio},
             {"router_lr", t.router_lr},
             {"router_epochs", t.router_epochs},
             {"router_hidden", t.router_hidden},
             {"rank", t.rank},
             {"alpha_init", t.alpha_init},
             {"positive_ratios", {t.ratios.image, t.ratios.meaning, t.ratios.shape}},
             {"phase2", t.phase2}};
  json dict{{"strategy", std::string(to_string(c.bank.strategy))},
            {"k_max", c.bank.k_max},
            {"sample_cap", c.bank.sample_cap},
            {"random_protos", c.bank.random_protos},
            {"max_iters", c.bank.max_iters}};
  json data;
  if (c.data.source == DataConfig::Source::Synth) {
    data = {{"source", "synth"}, {"synth", to_json(c.data.synth)}};
  } else {
    data = {{"source", "files"},
            {"manifest", c.data.manifest_path},
            {"embeddings", c.data.embeddings_path},
            {"post_map", post_map_name(c.data.post_map)},
            {"post_map_seed", c.data.post_map_seed}};
  }
  return json{{"stage_order", c.stage_order},
              {"canonical_order", c.canonical_order},
              {"seed", c.seed},
              {"mode", std::string(to_string(c.mode))},
              {"train", train},
              {"dictionary", dict},
              {"buffer_capacity", c.buffer_capacity},
              {"data", data},
              {"out", c.out_dir},
              {"write_checkpoints", c.write_checkpoints},
              {"record_timings", c.record_timings}};
}

RunConfig run_config_from_json(const json& j) {
  return parse_guard("run config", [&] {
    if (!j.is_object()) throw ParseError("run config: expected a JSON object");
    RunConfig c;
    c.stage_order = j.value("stage_order", c.stage_order);
    c.canonical_order = j.value("canonical_order", c.canonical_order);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = parse_run_mode(j.at("mode").get<std::string>());
    if (j.contains("train")) {
      const json& t = j.at("train");
      auto& tc = c.train;
      tc.phase1_epochs = t.value("phase1_epochs", tc.phase1_epochs);
      tc.phase2_epochs = t.value("phase2_epochs", tc.phase2_epochs);
      tc.batch_size = t.value("batch_size", tc.batch_size);
      tc.tau = t.value("tau", tc.tau);
      tc.lr = t.value("lr", tc.lr);
      tc.weight_decay = t.value("weight_decay", tc.weight_decay);
      tc.warmup_ratio = t.value("warmup_ratio", tc.warmup_ratio);
      tc.router_lr = t.value("router_lr", tc.router_lr);
      tc.router_epochs = t.value("router_epochs", tc.router_epochs);
      tc.router_hidden = t.value("router_hidden", tc.router_hidden);
      tc.rank = t.value("rank", tc.rank);
      tc.alpha_init = t.value("alpha_init", tc.alpha_init);
      if (t.contains("positive_ratios")) {
        const auto r = t.at("positive_ratios").get<std::vector<double>>();
        if (r.size() != 3) throw ParseError("run config: positive_ratios needs 3 weights");
        tc.ratios = {r[0], r[1], r[2]};
      }
      tc.phase2 = t.value("phase2", tc.phase2);
    }
    if (j.contains("dictionary")) {
      const json& d = j.at("dictionary");
      if (d.contains("strategy")) c.bank.strategy = parse_bank_strategy(d.at("strategy").get<std::string>());
      c.bank.k_max = d.value("k_max", c.bank.k_max);
      c.bank.sample_cap = d.value("sample_cap", c.bank.sample_cap);
      c.bank.random_protos = d.value("random_protos", c.bank.random_protos);
      c.bank.max_iters = d.value("max_iters", c.bank.max_iters);
    }
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    if (j.contains("data")) {
      const json& d = j.at("data");
      const std::string source = d.value("source", std::string("synth"));
      if (source == "synth") {
        c.data.source = DataConfig::Source::Synth;
        if (d.contains("synth")) c.data.synth = synth_config_from_json(d.at("synth"));
      } else if (source == "files") {
        c.data.source = DataConfig::Source::Files;
        c.data.manifest_path = d.value("manifest", std::string());
        c.data.embeddings_path = d.value("embeddings", std::string());
        c.data.post_map = parse_post_map(d.value("post_map", std::string("identity")));
        c.data.post_map_seed = d.value("post_map_seed", c.data.post_map_seed);
      } else {
        throw ParseError("run config: unknown data source '" + source + "'");
      }
    }
    c.out_dir = j.value("out", c.out_dir);
    c.write_checkpoints = j.value("write_checkpoints", c.write_checkpoints);
    c.record_timings = j.value("record_timings", c.record_timings);
    return c;
  });
}

RunConfig read_run_config(const fs::path& path) {
  const std::string text = read_file(path);
  return parse_guard("run config '" + path.string() + "'", [&] {
    RunConfig c = run_config_from_json(json::parse(text));
    // Relative data paths resolve against the config file's directory.
    auto resolve = [&](std::string& p) {
      if (!p.empty() && fs::path(p).is_relative()) p = (path.parent_path() / p).lexically_normal().string();
    };
    resolve(c.data.manifest_path);
    resolve(c.data.embeddings_path);
    return c;
  });
}

std::string config_digest(const RunConfig& config) {
  json j = to_json(config);
  j.erase("out");
  const std::string text = j.dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

// ---------------------------------------------------------------------------
// Model state
// ---------------------------------------------------------------------------

json to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw ParseError("matrix: shape does not match data");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  }
  return m;
}

json to_json(const SiaParams& p) {
  return json{{"script_id", p.script_id}, {"ln_gain", vec_to_json(p.ln_gain)},
              {"ln_bias", vec_to_json(p.ln_bias)}, {"w1", to_json(p.w1)},
              {"w2", to_json(p.w2)}, {"w_up", to_json(p.w_up)}, {"alpha", p.alpha}};
}

SiaParams sia_from_json(const json& j) {
  return parse_guard("adapter", [&] {
    SiaParams p;
    p.script_id = j.at("script_id").get<int>();
    p.ln_gain = vec_from_json(j.at("ln_gain"));
    p.ln_bias = vec_from_json(j.at("ln_bias"));
    p.w1 = matrix_from_json(j.at("w1"));
    p.w2 = matrix_from_json(j.at("w2"));
    p.w_up = matrix_from_json(j.at("w_up"));
    p.alpha = j.at("alpha").get<double>();
    p.validate();
    return p;
  });
}

json to_json(const RouterParams& p) {
  return json{{"w_trunk", to_json(p.w_trunk)}, {"b_trunk", vec_to_json(p.b_trunk)},
              {"w_head", to_json(p.w_head)}, {"b_head", vec_to_json(p.b_head)}};
}

RouterParams router_from_json(const json& j) {
  return parse_guard("router", [&] {
    RouterParams p;
    p.w_trunk = matrix_from_json(j.at("w_trunk"));
    p.b_trunk = vec_from_json(j.at("b_trunk"));
    p.w_head = matrix_from_json(j.at("w_head"));
    p.b_head = vec_from_json(j.at("b_head"));
    p.validate();
    return p;
  });
}

json to_json(const PrototypeBank& b) {
  json keys = json::array();
  for (const auto& k : b.class_keys) keys.push_back({k.script, k.character});
  return json{{"dim", b.dim},
              {"num_classes", b.num_classes()},
              {"strategy", std::string(to_string(b.config.strategy))},
              {"seed", b.config.seed},
              {"k_max", b.config.k_max},
              {"sample_cap", b.config.sample_cap},
              {"random_protos", b.config.random_protos},
              {"max_iters", b.config.max_iters},
              {"pointers", b.pointers},
              {"class_keys", keys},
              {"prototypes", to_json(b.prototypes)}};
}

PrototypeBank bank_from_json(const json& j) {
  return parse_guard("bank", [&] {
    PrototypeBank b;
    b.dim = j.at("dim").get<Eigen::Index>();
    b.config.strategy = parse_bank_strategy(j.at("strategy").get<std::string>());
    b.config.seed = j.at("seed").get<std::uint64_t>();
    b.config.k_max = j.value("k_max", b.config.k_max);
    b.config.sample_cap = j.value("sample_cap", b.config.sample_cap);
    b.config.random_protos = j.value("random_protos", b.config.random_protos);
    b.config.max_iters = j.value("max_iters", b.config.max_iters);
    b.pointers = j.at("pointers").get<std::vector<std::size_t>>();
    for (const auto& k : j.at("class_keys")) b.class_keys.push_back({k.at(0).get<int>(), k.at(1).get<int>()});
    b.prototypes = matrix_from_json(j.at("prototypes"));
    if (j.at("num_classes").get<std::size_t>() != b.class_keys.size()) {
      throw ParseError("bank: header class count disagrees with class keys");
    }
    if (b.num_classes() > 0) b.validate();
    return b;
  });
}

json to_json(const Checkpoint& c) {
  const StageState& s = c.state;
  json adapters = json::array();
  for (const auto& a : s.adapters) adapters.push_back(to_json(a));
  json buffer = json::array();
  for (const auto& e : s.buffer.entries) buffer.push_back({e.id, e.script, e.character});
  return json{{"format", "cret-checkpoint"},
              {"version", 1},
              {"stage", s.stage},
              {"mode", std::string(to_string(s.mode))},
              {"dim", c.dim},
              {"seed", c.seed},
              {"config_digest", c.config_digest},
              {"post_map", {{"kind", post_map_name(c.post_map)}, {"seed", c.post_map_seed}}},
              {"scripts", s.scripts},
              {"characters", s.characters},
              {"trained_characters", s.trained_characters},
              {"adapters", adapters},
              {"router", s.router ? to_json(*s.router) : json(nullptr)},
              {"bank", to_json(s.bank)},
              {"buffer", {{"capacity", s.buffer.capacity}, {"entries", buffer}}},
              {"row", {{"top1", c.row.top1}, {"top10", c.row.top10}}}};
}

Checkpoint checkpoint_from_json(const json& j) {
  return parse_guard("checkpoint", [&] {
    if (j.value("format", std::string()) != "cret-checkpoint") throw ParseError("not a checkpoint file");
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
    Checkpoint c;
    StageState& s = c.state;
    s.stage = j.at("stage").get<int>();
    s.mode = parse_run_mode(j.at("mode").get<std::string>());
    c.dim = j.at("dim").get<Eigen::Index>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config_digest = j.at("config_digest").get<std::string>();
    c.post_map = parse_post_map(j.at("post_map").at("kind").get<std::string>());
    c.post_map_seed = j.at("post_map").at("seed").get<std::uint64_t>();
    s.scripts = j.at("scripts").get<std::vector<std::string>>();
    s.characters = j.at("characters").get<std::vector<std::string>>();
    s.trained_characters = j.at("trained_characters").get<std::set<std::string>>();
    for (const auto& a : j.at("adapters")) s.adapters.push_back(sia_from_json(a));
    if (!j.at("router").is_null()) s.router = router_from_json(j.at("router"));
    s.bank = bank_from_json(j.at("bank"));
    s.buffer.capacity = j.at("buffer").at("capacity").get<std::size_t>();
    for (const auto& e : j.at("buffer").at("entries")) {
      s.buffer.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>(),
                                  e.at(2).get<std::string>()});
    }
    c.row.top1 = j.at("row").at("top1").get<std::vector<double>>();
    c.row.top10 = j.at("row").at("top10").get<std::vector<double>>();
    if (static_cast<int>(s.scripts.size()) != s.stage) throw ParseError("checkpoint: script list length != stage");
    if (s.bank.dim != c.dim) throw ParseError("checkpoint: bank dim != checkpoint dim");
    return c;
  });
}

void write_checkpoint(const fs::path& path, const Checkpoint& c) {
  write_file_atomic(path, to_json(c).dump() + "\n");
}

Checkpoint read_checkpoint(const fs::path& path) {
  const std::string text = read_file(path);
  return parse_guard("checkpoint '" + path.string() + "'",
                     [&] { return checkpoint_from_json(json::parse(text)); });
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

json to_json(const MetricsReport& r) {
  json j{{"mode", r.mode},
         {"seed", r.seed},
         {"config_digest", r.config_digest},
         {"stage_order", r.stage_order},
         {"top1", r.top1.rows},
         {"top10", r.top10.rows},
         {"aa_top1", r.aa_top1},
         {"aa_top10", r.aa_top10},
         {"fgt_top1", opt_double(r.fgt_top1)},
         {"fgt_top10", opt_double(r.fgt_top10)},
         {"zs_at1", opt_double(r.zs_at1)},
         {"zs_at20", opt_double(r.zs_at20)},
         {"definitions",
          {{"AA_t", "mean over observed stages i<=t of A[t][i]"},
           {"FGT", "mean over i<T of (max_{i<=t<T} A[t][i] - A[T][i]), unclamped"},
           {"ZS@k", "fraction of zero-shot queries whose character ranks in the top k"}}}};
  if (!r.stage_seconds.empty()) j["stage_seconds"] = r.stage_seconds;
  return j;
}

MetricsReport report_from_json(const json& j) {
  return parse_guard("report", [&] {
    MetricsReport r;
    r.mode = j.at("mode").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.stage_order = j.at("stage_order").get<std::vector<std::string>>();
    r.top1.rows = j.at("top1").get<std::vector<std::vector<double>>>();
    r.top10.rows = j.at("top10").get<std::vector<std::vector<double>>>();
    r.aa_top1 = j.at("aa_top1").get<std::vector<double>>();
    r.aa_top10 = j.at("aa_top10").get<std::vector<double>>();
    r.fgt_top1 = opt_double_from(j, "fgt_top1");
    r.fgt_top10 = opt_double_from(j, "fgt_top10");
    r.zs_at1 = opt_double_from(j, "zs_at1");
    r.zs_at20 = opt_double_from(j, "zs_at20");
    if (j.contains("stage_seconds")) r.stage_seconds = j.at("stage_seconds").get<std::vector<double>>();
    return r;
  });
}

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "metric,t,i,value\n";
  auto matrix = [&](const char* name, const AccuracyMatrix& m) {
    for (std::size_t t = 0; t < m.rows.size(); ++t) {
      for (std::size_t i = 0; i < m.rows[t].size(); ++i) {
        os << name << ',' << t + 1 << ',' << i + 1 << ',' << m.rows[t][i] << '\n';
      }
    }
  };
  matrix("A_top1", r.top1);
  matrix("A_top10", r.top10);
  for (std::size_t t = 0; t < r.aa_top1.size(); ++t) os << "AA_top1," << t + 1 << ",," << r.aa_top1[t] << '\n';
  for (std::size_t t = 0; t < r.aa_top10.size(); ++t) os << "AA_top10," << t + 1 << ",," << r.aa_top10[t] << '\n';
  if (r.fgt_top1) os << "FGT_top1,,," << *r.fgt_top1 << '\n';
  if (r.fgt_top10) os << "FGT_top10,,," << *r.fgt_top10 << '\n';
  if (r.zs_at1) os << "ZS@1,,," << *r.zs_at1 << '\n';
  if (r.zs_at20) os << "ZS@20,,," << *r.zs_at20 << '\n';
  for (std::size_t t = 0; t < r.stage_seconds.size(); ++t) os << "seconds," << t + 1 << ",," << r.stage_seconds[t] << '\n';
  return os.str();
}

void print_report(std::ostream& os, const MetricsReport& r) {
  const auto flags = os.flags();
  os << "mode " << r.mode << "  seed " << r.seed << "  config " << r.config_digest.substr(0, 12) << '\n';
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(8) << "stage" << std::right;
  for (const auto& s : r.stage_order) os << std::setw(14) << s;
  os << std::setw(16) << "AA (top1/10)" << '\n';
  for (std::size_t t = 0; t < r.top1.rows.size(); ++t) {
    os << std::left << std::setw(8) << (std::to_string(t + 1) + ":" + r.stage_order[t]) << std::right;
    for (std::size_t i = 0; i < r.stage_order.size(); ++i) {
      if (i <= t) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(1) << 100 * r.top1.rows[t][i] << "/" << 100 * r.top10.rows[t][i];
        os << std::setw(14) << cell.str();
      } else {
        os << std::setw(14) << "-";
      }
    }
    std::ostringstream aa;
    aa << std::fixed << std::setprecision(1) << 100 * r.aa_top1[t] << "/" << 100 * r.aa_top10[t];
    os << std::setw(16) << aa.str() << '\n';
  }
  if (r.fgt_top1) os << "FGT (top1/10): " << 100 * *r.fgt_top1 << " / " << 100 * *r.fgt_top10 << '\n';
  if (r.zs_at1) os << "ZS@1 / ZS@20:  " << 100 * *r.zs_at1 << " / " << 100 * *r.zs_at20 << '\n';
  if (!r.stage_seconds.empty()) {
    double total = 0.0;
    for (double s : r.stage_seconds) total += s;
    os << "wall clock:    " << total << " s\n";
  }
  os.flags(flags);
}

void write_report(const fs::path& dir, const MetricsReport& r) {
  write_file_atomic(dir / "report.json", to_json(r).dump(2) + "\n");
  write_file_atomic(dir / "report.csv", report_to_csv(r));
}

}  // namespace cret
