#include "cret/benchmark.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "cret/engine.hpp"
#include "cret/error.hpp"
#include "cret/synth.hpp"

namespace cret {

std::map<std::pair<RunMode, std::uint64_t>, MetricsReport> run_benchmark(
    const RunConfig& base, const std::vector<RunMode>& modes, const std::vector<std::uint64_t>& seeds,
    unsigned threads) {
  if (base.data.source != DataConfig::Source::Synth) throw InvalidInput("run_benchmark needs a synthetic source");

  // One dataset per seed, shared read-only by all modes.
  std::vector<SynthDataset> data;
  for (auto seed : seeds) {
    SynthConfig sc = base.data.synth;
    sc.seed = seed;
    data.push_back(generate(sc));
  }
  std::vector<EmbedProvider> providers;
  for (const auto& ds : data) providers.emplace_back(ds.embeddings, ds.post_map);

  std::vector<std::pair<std::size_t, RunMode>> jobs;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (RunMode m : modes) jobs.emplace_back(s, m);
  }
  std::map<std::pair<RunMode, std::uint64_t>, MetricsReport> out;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto [s, mode] = jobs[j];
      try {
        RunConfig cfg = base;
        cfg.seed = seeds[s];
        cfg.data.synth.seed = seeds[s];
        cfg.mode = mode;
        cfg.out_dir.clear();
        ContinualEngine engine(cfg, data[s].manifest, providers[s]);
        MetricsReport r = engine.run_all();
        std::lock_guard lock(mu);
        out.emplace(std::make_pair(mode, seeds[s]), std::move(r));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace cret
