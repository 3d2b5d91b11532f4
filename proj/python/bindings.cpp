#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cret/benchmark.hpp"
#include "cret/engine.hpp"
#include "cret/error.hpp"
#include "cret/io.hpp"
#include "cret/log.hpp"

namespace py = pybind11;
using namespace cret;

namespace {

// JSON crosses the boundary as text; the package wrapper decodes it.
RunConfig config_from_text(const std::string& text) { return run_config_from_json(json::parse(text)); }

std::string run_text(const std::string& config_text) {
  RunConfig cfg = config_from_text(config_text);
  if (cfg.data.source != DataConfig::Source::Synth) {
    const DatasetManifest manifest = read_manifest(cfg.data.manifest_path);
    const EmbedProvider provider =
        load_file_provider(cfg.data.embeddings_path, cfg.data.post_map, cfg.data.post_map_seed);
    py::gil_scoped_release release;
    return to_json(ContinualEngine(cfg, manifest, provider).run_all()).dump();
  }
  SynthConfig sc = cfg.data.synth;
  sc.seed = cfg.seed;
  const SynthDataset data = generate(sc);
  const EmbedProvider provider(data.embeddings, data.post_map);
  py::gil_scoped_release release;
  return to_json(ContinualEngine(cfg, data.manifest, provider).run_all()).dump();
}

std::string benchmark_text(const std::string& config_text, const std::vector<std::string>& modes,
                           const std::vector<std::uint64_t>& seeds, unsigned threads) {
  const RunConfig cfg = config_from_text(config_text);
  std::vector<RunMode> parsed;
  for (const auto& m : modes) parsed.push_back(parse_run_mode(m));
  std::map<std::pair<RunMode, std::uint64_t>, MetricsReport> res;
  {
    py::gil_scoped_release release;
    res = run_benchmark(cfg, parsed, seeds, threads);
  }
  json out = json::array();
  for (const auto& [key, r] : res) out.push_back(to_json(r));
  return out.dump();
}

py::tuple generate_text(const std::string& synth_text) {
  const SynthDataset ds = generate(synth_config_from_json(json::parse(synth_text)));
  return py::make_tuple(manifest_to_jsonl(ds.manifest), embeddings_to_jsonl(ds.embeddings));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "continual embedding retrieval core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<DegenerateInput>(m, "DegenerateInput", base.ptr());
  py::register_exception<TrainingAbort>(m, "TrainingAbort", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<Incompatible>(m, "Incompatible", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("ROUTER_HIDDEN") = kRouterHidden;

  // numerics
  m.def("layer_norm", &layer_norm, py::arg("x"), py::arg("gain"), py::arg("bias"), py::arg("eps") = kLayerNormEps);
  m.def("softmax", &softmax);
  m.def("l2_normalize", &l2_normalize);
  m.def("cosine_sim", &cosine_sim);

  // adapter
  py::class_<SiaParams>(m, "SiaParams")
      .def_readwrite("script_id", &SiaParams::script_id)
      .def_readwrite("ln_gain", &SiaParams::ln_gain)
      .def_readwrite("ln_bias", &SiaParams::ln_bias)
      .def_readwrite("w1", &SiaParams::w1)
      .def_readwrite("w2", &SiaParams::w2)
      .def_readwrite("w_up", &SiaParams::w_up)
      .def_readwrite("alpha", &SiaParams::alpha)
      .def_property_readonly("dim", &SiaParams::dim)
      .def_property_readonly("rank", &SiaParams::rank)
      .def(py::self == py::self);
  m.def("sia_init", &sia_init, py::arg("dim"), py::arg("rank"), py::arg("seed"), py::arg("alpha") = 0.5,
        py::arg("script_id") = 0);
  m.def("sia_apply", &sia_apply, py::arg("e"), py::arg("params"));

  // router
  py::class_<RouterParams>(m, "RouterParams")
      .def_readwrite("w_trunk", &RouterParams::w_trunk)
      .def_readwrite("b_trunk", &RouterParams::b_trunk)
      .def_readwrite("w_head", &RouterParams::w_head)
      .def_readwrite("b_head", &RouterParams::b_head)
      .def_property_readonly("num_scripts", &RouterParams::num_scripts);
  m.def("router_init", &router_init, py::arg("dim"), py::arg("hidden"), py::arg("num_scripts"), py::arg("seed"));
  m.def("router_grow", &router_grow, py::arg("params"), py::arg("new_t"), py::arg("seed"));
  m.def("route_probs", &route_probs, py::arg("e"), py::arg("params"));
  m.def("route_select", &route_select);
  m.def("router_ce_loss", [](const Vector& e, int y, const RouterParams& p) { return router_ce_loss(e, y, p).loss; },
        py::arg("e"), py::arg("true_script"), py::arg("params"));

  // objective
  m.def(
      "infonce_loss",
      [](const Matrix& anchors, const Matrix& candidates, double tau) {
        ContrastiveBatch b{anchors, candidates,
                           std::vector<Modality>(static_cast<std::size_t>(candidates.rows()), Modality::Image),
                           std::vector<bool>(static_cast<std::size_t>(candidates.rows()), true)};
        const InfoNceResult r = infonce_loss(b, tau);
        return py::make_tuple(r.loss, r.grad_anchors, r.grad_candidates);
      },
      py::arg("anchors"), py::arg("candidates"), py::arg("tau") = kDefaultTemperature);

  // dictionary
  py::class_<ClassKey>(m, "ClassKey")
      .def(py::init<>())
      .def(py::init([](int s, int c) { return ClassKey{s, c}; }))
      .def_readwrite("script", &ClassKey::script)
      .def_readwrite("character", &ClassKey::character)
      .def(py::self == py::self)
      .def("__repr__", [](const ClassKey& k) {
        return "ClassKey(" + std::to_string(k.script) + ", " + std::to_string(k.character) + ")";
      });
  py::class_<ClusteringResult>(m, "ClusteringResult")
      .def_readonly("centroids", &ClusteringResult::centroids)
      .def_readonly("assignments", &ClusteringResult::assignments)
      .def_readonly("inertia", &ClusteringResult::inertia)
      .def_readonly("inertia_history", &ClusteringResult::inertia_history);
  py::class_<AutoKResult>(m, "AutoKResult")
      .def_readonly("k", &AutoKResult::k)
      .def_readonly("k_max", &AutoKResult::k_max)
      .def_readonly("scores", &AutoKResult::scores);
  m.def("spherical_kmeans", &spherical_kmeans, py::arg("points"), py::arg("k"), py::arg("seed"),
        py::arg("max_iters") = kDefaultKMeansIters);
  m.def("silhouette_cos", &silhouette_cos);
  m.def("auto_k", &auto_k, py::arg("points"), py::arg("seed"), py::arg("k_max") = kDefaultKMax,
        py::arg("sample_cap") = kDefaultSampleCap);

  py::class_<PrototypeBank>(m, "PrototypeBank")
      .def_readonly("prototypes", &PrototypeBank::prototypes)
      .def_readonly("pointers", &PrototypeBank::pointers)
      .def_readonly("class_keys", &PrototypeBank::class_keys)
      .def_property_readonly("num_classes", &PrototypeBank::num_classes)
      .def(py::self == py::self);
  m.def(
      "build_bank",
      [](const Matrix& embeddings, const std::vector<ClassKey>& keys, const std::string& strategy, std::uint64_t seed) {
        BankConfig cfg;
        cfg.strategy = parse_bank_strategy(strategy);
        cfg.seed = seed;
        return build_bank(LabeledEmbeddings{embeddings, keys}, cfg);
      },
      py::arg("embeddings"), py::arg("keys"), py::arg("strategy") = "autok", py::arg("seed") = 0);
  m.def(
      "bank_extend",
      [](const PrototypeBank& bank, const Matrix& embeddings, const std::vector<ClassKey>& keys) {
        return bank_extend(bank, LabeledEmbeddings{embeddings, keys});
      },
      py::arg("bank"), py::arg("embeddings"), py::arg("keys"));
  m.def(
      "rank_classes",
      [](const Vector& q, const PrototypeBank& bank, std::size_t top_k) {
        std::vector<std::pair<ClassKey, double>> out;
        for (const auto& s : rank_classes(q, bank, top_k)) out.emplace_back(s.key, s.score);
        return out;
      },
      py::arg("query"), py::arg("bank"), py::arg("top_k") = 10);
  m.def("class_scores", &class_scores);

  // metrics
  m.def("compute_aa", [](const std::vector<std::vector<double>>& rows, std::size_t t) {
    return compute_AA(AccuracyMatrix{rows}, t);
  });
  m.def("compute_fgt", [](const std::vector<std::vector<double>>& rows, std::size_t t) {
    return compute_FGT(AccuracyMatrix{rows}, t);
  });

  // data and runs
  m.def("_generate", &generate_text, py::arg("synth_json"));
  m.def("_run", &run_text, py::arg("config_json"));
  m.def("_benchmark", &benchmark_text, py::arg("config_json"), py::arg("modes"), py::arg("seeds"),
        py::arg("threads") = 0);
  m.def("_config_digest", [](const std::string& text) { return config_digest(config_from_text(text)); });
  m.def("set_warning_sink", [](LogSink sink) { set_warning_sink(std::move(sink)); });
}
