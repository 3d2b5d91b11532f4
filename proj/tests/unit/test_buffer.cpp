#include <doctest.h>

#include <algorithm>
#include <set>

#include "cret/buffer.hpp"

using namespace cret;

namespace {

std::vector<BufferEntry> stage(const std::string& script, int n) {
  std::vector<BufferEntry> out;
  for (int i = 0; i < n; ++i) out.push_back({script + "/" + std::to_string(i), script, "c" + std::to_string(i % 17)});
  return out;
}

std::set<std::string> ids(const MemoryBuffer& b, const std::string& script) {
  std::set<std::string> out;
  for (const auto& e : b.entries)
    if (e.script == script) out.insert(e.id);
  return out;
}

}  // namespace

TEST_SUITE("buffer") {

TEST_CASE("quotas") {
  CHECK(buffer_quotas(10000, 3) == std::vector<std::size_t>{3334, 3333, 3333});
  CHECK(buffer_quotas(10000, 6) == std::vector<std::size_t>{1667, 1667, 1667, 1667, 1666, 1666});
  CHECK(buffer_quotas(5, 1) == std::vector<std::size_t>{5});
  CHECK(buffer_quotas(2, 3) == std::vector<std::size_t>{1, 1, 0});
  CHECK(buffer_quotas(7, 0).empty());
}

TEST_CASE("a small first stage is kept whole") {
  Rng rng(1);
  const auto data = stage("CS", 500);
  const MemoryBuffer b = buffer_update(MemoryBuffer{}, data, {"CS"}, rng);
  CHECK(b.entries.size() == 500);
  CHECK(b.count("CS") == 500);
}

TEST_CASE("rebalancing keeps scripts at quota and only evicts") {
  Rng rng(2);
  MemoryBuffer b;
  b.capacity = 300;
  std::vector<std::string> seen;
  const std::vector<std::string> scripts = {"CS", "WSC", "SAC", "SS", "BI", "OBC"};
  for (std::size_t t = 0; t < scripts.size(); ++t) {
    seen.push_back(scripts[t]);
    const MemoryBuffer before = b;
    b = buffer_update(b, stage(scripts[t], 400), seen, rng);
    const auto quotas = buffer_quotas(300, seen.size());
    CHECK(b.entries.size() == 300);
    for (std::size_t s = 0; s < seen.size(); ++s) {
      CHECK(b.count(seen[s]) == quotas[s]);
      if (s + 1 < seen.size()) {
        const auto now = ids(b, seen[s]), was = ids(before, seen[s]);
        CHECK(std::includes(was.begin(), was.end(), now.begin(), now.end()));
      }
    }
  }
}

TEST_CASE("old scripts are never topped up from later stages") {
  Rng rng(3);
  MemoryBuffer b;
  b.capacity = 100;
  b = buffer_update(b, stage("CS", 10), {"CS"}, rng);
  auto mixed = stage("WSC", 200);
  const auto extra = stage("CS", 200);
  mixed.insert(mixed.end(), extra.begin() + 50, extra.end());
  b = buffer_update(b, mixed, {"CS", "WSC"}, rng);
  CHECK(b.count("CS") == 10);
  CHECK(b.count("WSC") == 50);
}

TEST_CASE("deterministic for a seed") {
  Rng a(9), b(9);
  MemoryBuffer m;
  m.capacity = 50;
  CHECK(buffer_update(m, stage("CS", 400), {"CS"}, a) == buffer_update(m, stage("CS", 400), {"CS"}, b));
}

}  // TEST_SUITE
