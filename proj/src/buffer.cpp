#include "cret/buffer.hpp"

#include <algorithm>
#include <set>

#include "cret/error.hpp"

namespace cret {

std::size_t MemoryBuffer::count(const std::string& script) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const BufferEntry& e) { return e.script == script; }));
}

std::vector<std::size_t> buffer_quotas(std::size_t capacity, std::size_t num_scripts) {
  if (num_scripts == 0) return {};
  std::vector<std::size_t> q(num_scripts, capacity / num_scripts);
  for (std::size_t i = 0; i < capacity % num_scripts; ++i) ++q[i];
  return q;
}

MemoryBuffer buffer_update(const MemoryBuffer& buffer, const std::vector<BufferEntry>& stage_train,
                           const std::vector<std::string>& observed_scripts, Rng& rng) {
  const auto quotas = buffer_quotas(buffer.capacity, observed_scripts.size());
  MemoryBuffer out;
  out.capacity = buffer.capacity;

  for (std::size_t s = 0; s < observed_scripts.size(); ++s) {
    const std::string& script = observed_scripts[s];
    std::vector<BufferEntry> kept;
    std::set<std::string> present;
    for (const auto& e : buffer.entries) {
      if (e.script == script) {
        kept.push_back(e);
        present.insert(e.id);
      }
    }
    const std::size_t quota = quotas[s];
    if (kept.size() > quota) {
      auto keep = rng.sample_without_replacement(kept.size(), quota);
      std::sort(keep.begin(), keep.end());
      std::vector<BufferEntry> trimmed;
      for (std::size_t i : keep) trimmed.push_back(kept[i]);
      kept = std::move(trimmed);
    } else if (kept.size() < quota && s + 1 == observed_scripts.size()) {
      // earlier scripts' training data is gone; only the current stage tops up
      std::vector<const BufferEntry*> pool;
      for (const auto& e : stage_train) {
        if (e.script == script && !present.count(e.id)) pool.push_back(&e);
      }
      const std::size_t need = std::min(quota - kept.size(), pool.size());
      for (std::size_t i : rng.sample_without_replacement(pool.size(), need)) kept.push_back(*pool[i]);
    }
    out.entries.insert(out.entries.end(), kept.begin(), kept.end());
  }
  return out;
}

}  // namespace cret
