#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cret/rng.hpp"

namespace cret {

inline constexpr std::size_t kDefaultBufferCapacity = 10000;

/// A buffered training image. The script label is kept for replay
/// supervision only.
struct BufferEntry {
  std::string id;
  std::string script;
  std::string character;

  bool operator==(const BufferEntry&) const = default;
};

struct MemoryBuffer {
  std::size_t capacity = kDefaultBufferCapacity;
  std::vector<BufferEntry> entries;

  std::size_t count(const std::string& script) const;
  bool operator==(const MemoryBuffer&) const = default;
};

/// Per-script quotas: floor(capacity / n) each, remainder to the earliest scripts.
std::vector<std::size_t> buffer_quotas(std::size_t capacity, std::size_t num_scripts);

/// Rebalances the buffer over `observed_scripts` (in onboarding order) after a
/// stage. Previously buffered items are retained first; scripts over quota
/// are evicted uniformly; the newest script is topped up uniformly from
/// `stage_train` (the only data still accessible).
MemoryBuffer buffer_update(const MemoryBuffer& buffer, const std::vector<BufferEntry>& stage_train,
                           const std::vector<std::string>& observed_scripts, Rng& rng);

}  // namespace cret
