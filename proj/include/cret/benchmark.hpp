#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "cret/config.hpp"
#include "cret/metrics.hpp"

namespace cret {

/// Runs every (mode, seed) pair of a synthetic configuration on up to
/// `threads` worker threads. Each seed regenerates its own dataset.
/// Nothing is written to disk.
std::map<std::pair<RunMode, std::uint64_t>, MetricsReport> run_benchmark(
    const RunConfig& base, const std::vector<RunMode>& modes, const std::vector<std::uint64_t>& seeds,
    unsigned threads = 0);

}  // namespace cret
