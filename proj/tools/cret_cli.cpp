// cret: command-line driver for dataset generation, continual runs,
// checkpoint evaluation, zero-shot matching, bank building and reports.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "cret/engine.hpp"
#include "cret/error.hpp"
#include "cret/io.hpp"
#include "cret/synth.hpp"

namespace fs = std::filesystem;
using namespace cret;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool with_mode) {
  app->add_option("--config", c.config, "run configuration (JSON)");
  app->add_option("--seed", c.seed, "seed override");
  if (with_mode) app->add_option("--mode", c.mode, "run mode override");
  app->add_option("--out", c.out, "output directory");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : read_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.data.synth.seed = cfg.seed;  // a synthetic dataset always follows the run seed
  if (!c.mode.empty()) cfg.mode = parse_run_mode(c.mode);
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

/// Dataset a command operates on: either regenerated from a synthetic
/// config or loaded from files.
struct LoadedData {
  DatasetManifest manifest;
  std::optional<EmbedProvider> provider;
};

LoadedData load_data(const RunConfig& cfg) {
  LoadedData d;
  if (cfg.data.source == DataConfig::Source::Synth) {
    SynthDataset ds = generate(cfg.data.synth);
    d.manifest = std::move(ds.manifest);
    d.provider.emplace(std::move(ds.embeddings), std::move(ds.post_map));
  } else {
    if (cfg.data.manifest_path.empty() || cfg.data.embeddings_path.empty()) {
      throw InvalidInput("file data source needs both 'manifest' and 'embeddings'");
    }
    d.manifest = read_manifest(cfg.data.manifest_path);
    d.provider.emplace(load_file_provider(cfg.data.embeddings_path, cfg.data.post_map, cfg.data.post_map_seed));
  }
  return d;
}

LoadedData load_files(const std::string& manifest, const std::string& embeddings, PostMap post) {
  LoadedData d;
  d.manifest = read_manifest(manifest);
  d.provider.emplace(load_file_provider(embeddings, std::move(post)));
  return d;
}

/// Data for a checkpoint: explicit files, or the synthetic config it came from.
LoadedData checkpoint_data(const Checkpoint& ck, const Common& c, const std::string& manifest,
                           const std::string& embeddings) {
  if (!manifest.empty() || !embeddings.empty()) {
    if (manifest.empty() || embeddings.empty()) throw InvalidInput("--manifest and --embeddings go together");
    const auto records = read_embeddings(embeddings);
    if (!records.empty() && records.front().values.size() != ck.dim) {
      throw Incompatible("dim mismatch: checkpoint has " + std::to_string(ck.dim) + ", embeddings have " +
                         std::to_string(records.front().values.size()));
    }
    return load_files(manifest, embeddings, make_post_map(ck.post_map, ck.dim, ck.post_map_seed));
  }
  if (c.config.empty()) throw InvalidInput("need --config or --manifest/--embeddings");
  Common cc = c;
  if (!cc.seed) cc.seed = ck.seed;
  LoadedData d = load_data(load_config(cc));
  if (d.provider->dim() != ck.dim) {
    throw Incompatible("dim mismatch: checkpoint has " + std::to_string(ck.dim) + ", data has " +
                       std::to_string(d.provider->dim()));
  }
  return d;
}

void check_scripts(const Checkpoint& ck, const ManifestIndex& index) {
  const auto have = index.scripts();
  for (const auto& s : ck.state.scripts) {
    if (std::find(have.begin(), have.end(), s) == have.end()) {
      throw Incompatible("script mismatch: checkpoint script '" + s + "' is absent from the manifest");
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_gen(const Common& c) {
  const RunConfig cfg = load_config(c);
  const SynthConfig& sc = cfg.data.synth;
  if (c.out.empty()) throw InvalidInput("gen needs --out");
  const SynthDataset ds = generate(sc);
  const fs::path out = c.out;
  write_manifest(out / "manifest.jsonl", ds.manifest);
  write_embeddings(out / "embeddings.jsonl", ds.embeddings);
  json meta{{"synth", to_json(sc)},
            {"post_map", ds.post_map.is_identity() ? "identity" : "orthogonal"},
            {"post_map_seed", ds.post_map.seed()}};
  write_file_atomic(out / "dataset.json", meta.dump(2) + "\n");
  std::ostringstream summary;
  print_summary(summary, summarize(ds.manifest));
  write_file_atomic(out / "summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

int cmd_run(const Common& c) {
  const RunConfig cfg = load_config(c);
  cfg.validate();
  const LoadedData data = load_data(cfg);
  ContinualEngine engine(cfg, data.manifest, *data.provider);
  const MetricsReport report = engine.run_all();
  print_report(std::cout, report);
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& manifest,
             const std::string& embeddings, int split_stage) {
  if (checkpoint.empty()) throw InvalidInput("eval needs --checkpoint");
  const Checkpoint ck = read_checkpoint(checkpoint);
  const LoadedData data = checkpoint_data(ck, c, manifest, embeddings);
  const ManifestIndex index(data.manifest);
  check_scripts(ck, index);
  if (split_stage > ck.state.stage) {
    throw ContractViolation("stage-" + std::to_string(ck.state.stage) + " checkpoint cannot evaluate the stage-" +
                            std::to_string(split_stage) + " split");
  }
  const StageResult row = evaluate_stage(ck.state, index, *data.provider);
  json out{{"stage", ck.state.stage}, {"config_digest", ck.config_digest}};
  if (split_stage > 0) {
    const auto i = static_cast<std::size_t>(split_stage - 1);
    std::cout << "stage " << split_stage << " (" << ck.state.scripts[i] << "): top1 " << fmt(row.top1[i])
              << "  top10 " << fmt(row.top10[i]) << '\n';
    out["split_stage"] = split_stage;
    out["top1"] = row.top1[i];
    out["top10"] = row.top10[i];
  } else {
    for (std::size_t i = 0; i < row.top1.size(); ++i) {
      std::cout << "A[" << ck.state.stage << "][" << i + 1 << "] " << ck.state.scripts[i] << ": top1 "
                << fmt(row.top1[i]) << "  top10 " << fmt(row.top10[i]) << '\n';
    }
    const bool match = row.top1 == ck.row.top1 && row.top10 == ck.row.top10;
    std::cout << "matches checkpoint row: " << (match ? "yes" : "no") << '\n';
    out["top1"] = row.top1;
    out["top10"] = row.top10;
    out["matches_checkpoint"] = match;
  }
  if (!c.out.empty()) write_file_atomic(fs::path(c.out) / "eval.json", out.dump(2) + "\n");
  return 0;
}

int cmd_zs(const Common& c, const std::string& checkpoint, const std::string& manifest,
           const std::string& embeddings, const std::string& dictionary) {
  if (checkpoint.empty()) throw InvalidInput("zs needs --checkpoint");
  const Checkpoint ck = read_checkpoint(checkpoint);
  const LoadedData data = checkpoint_data(ck, c, manifest, embeddings);
  const ManifestIndex index(data.manifest);
  check_scripts(ck, index);
  TextDictionary dict;
  if (dictionary.empty()) {
    dict = zero_shot_dictionary(index, *data.provider);
  } else {
    std::map<std::string, Vector> entries;
    for (const auto& r : read_embeddings(dictionary)) {
      if (r.kind != Modality::Meaning || !r.character) continue;
      if (r.values.size() != ck.dim) throw Incompatible("dictionary dim differs from checkpoint dim");
      if (!entries.emplace(*r.character, r.values).second) {
        throw ParseError("dictionary has two entries for '" + *r.character + "'");
      }
    }
    dict.embeddings.resize(static_cast<Eigen::Index>(entries.size()), ck.dim);
    Eigen::Index row = 0;
    for (const auto& [ch, v] : entries) {
      dict.characters.push_back(ch);
      dict.embeddings.row(row++) = v.transpose();
    }
  }
  if (dict.size() == 0) throw InvalidInput("empty zero-shot dictionary");
  const ZeroShotResult zs = run_zero_shot(ck.state, index, *data.provider, dict);
  if (zs.queries == 0) throw InvalidInput("no zero-shot queries for the checkpoint's scripts");
  if (zs.at1 > zs.at20) throw Error("internal", "ZS@1 exceeds ZS@20");
  std::cout << "queries " << zs.queries << "  candidates " << dict.size() << "  ZS@1 " << fmt(zs.at1)
            << "  ZS@20 " << fmt(zs.at20) << '\n';
  if (!c.out.empty()) {
    json out{{"queries", zs.queries}, {"candidates", dict.size()}, {"zs_at1", zs.at1}, {"zs_at20", zs.at20}};
    write_file_atomic(fs::path(c.out) / "zs.json", out.dump(2) + "\n");
  }
  return 0;
}

int cmd_dict_build(const Common& c, const std::string& embeddings, const std::string& strategy) {
  if (embeddings.empty()) throw InvalidInput("dict-build needs --embeddings");
  if (c.out.empty()) throw InvalidInput("dict-build needs --out");
  const RunConfig cfg = load_config(c);
  BankConfig bc = cfg.effective_bank();
  if (!strategy.empty()) bc.strategy = parse_bank_strategy(strategy);
  bc.seed = cfg.seed;

  std::vector<EmbeddingRecord> images;
  std::set<std::string> scripts;
  std::set<std::string> chars;
  for (auto& r : read_embeddings(embeddings)) {
    if (r.kind != Modality::Image || !r.script || !r.character) continue;
    scripts.insert(*r.script);
    chars.insert(*r.character);
    images.push_back(std::move(r));
  }
  if (images.empty()) throw InvalidInput("no labelled image records in '" + embeddings + "'");
  const std::vector<std::string> script_list(scripts.begin(), scripts.end());
  const std::vector<std::string> char_list(chars.begin(), chars.end());
  auto pos = [](const std::vector<std::string>& v, const std::string& s) {
    return static_cast<int>(std::lower_bound(v.begin(), v.end(), s) - v.begin());
  };
  LabeledEmbeddings data;
  data.embeddings.resize(static_cast<Eigen::Index>(images.size()), images.front().values.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    data.embeddings.row(static_cast<Eigen::Index>(i)) = l2_normalize(images[i].values).transpose();
    data.keys.push_back({pos(script_list, *images[i].script), pos(char_list, *images[i].character)});
  }
  const PrototypeBank bank = build_bank(data, bc);
  json out = to_json(bank);
  out["scripts"] = script_list;
  out["characters"] = char_list;
  const fs::path path = fs::path(c.out) / "bank.json";
  write_file_atomic(path, out.dump() + "\n");

  std::map<std::size_t, std::size_t> hist;
  for (std::size_t k = 0; k < bank.num_classes(); ++k) ++hist[bank.pointers[k + 1] - bank.pointers[k]];
  std::cout << "classes " << bank.num_classes() << "  prototypes " << bank.prototypes.rows() << "  strategy "
            << to_string(bc.strategy) << '\n';
  for (const auto& [k, n] : hist) std::cout << "  K=" << k << ": " << n << " classes\n";
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_report(const std::string& in, bool csv) {
  if (in.empty()) throw InvalidInput("report needs a report.json path");
  const std::string text = read_file(in);
  MetricsReport r;
  try {
    r = report_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  MetricsReport check = r;
  check.finalize();
  if (check.aa_top1 != r.aa_top1 || check.aa_top10 != r.aa_top10 || check.fgt_top1 != r.fgt_top1 ||
      check.fgt_top10 != r.fgt_top10) {
    throw InvalidInput("report is inconsistent: stored AA/FGT differ from its matrices");
  }
  if (csv) {
    std::cout << report_to_csv(r);
  } else {
    print_report(std::cout, r);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual embedding-retrieval engine"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, manifest, embeddings, dictionary, strategy, report_in;
  int split_stage = 0;
  bool csv = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic multi-script dataset");
  add_common(gen, common, false);

  auto* run = app.add_subcommand("run", "run every stage and write checkpoints and a report");
  add_common(run, common, true);

  auto* eval = app.add_subcommand("eval", "re-evaluate a checkpoint on its test splits");
  add_common(eval, common, false);
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--manifest", manifest);
  eval->add_option("--embeddings", embeddings);
  eval->add_option("--split-stage", split_stage, "evaluate a single stage's split (1-based)");

  auto* zs = app.add_subcommand("zs", "zero-shot text-dictionary matching for a checkpoint");
  add_common(zs, common, false);
  zs->add_option("--checkpoint", checkpoint)->required();
  zs->add_option("--manifest", manifest);
  zs->add_option("--embeddings", embeddings);
  zs->add_option("--dictionary", dictionary, "embeddings file of meaning texts");

  auto* dict = app.add_subcommand("dict-build", "build a prototype bank over an embeddings file");
  add_common(dict, common, false);
  dict->add_option("--embeddings", embeddings)->required();
  dict->add_option("--strategy", strategy, "autok | mean | random");

  auto* rep = app.add_subcommand("report", "print a metrics report");
  rep->add_option("report", report_in, "report.json")->required();
  rep->add_flag("--csv", csv, "emit CSV instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*run) return cmd_run(common);
    if (*eval) return cmd_eval(common, checkpoint, manifest, embeddings, split_stage);
    if (*zs) return cmd_zs(common, checkpoint, manifest, embeddings, dictionary);
    if (*dict) return cmd_dict_build(common, embeddings, strategy);
    if (*rep) return cmd_report(report_in, csv);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << e.category() << ": " << msg << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
