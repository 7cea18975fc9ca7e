#pragma once

#include <map>
#include <optional>
#include <random>
#include <vector>

#include "synchro/core.hpp"
#include "synchro/segment.hpp"

namespace synchro::testing {

// key, two ints, one string.
inline Schema SmallSchema() {
  return Schema::Make({{"k", CellType::kInt64}, {"a", CellType::kInt64}, {"b", CellType::kInt64},
                       {"s", CellType::kUtf8}})
      .value();
}

inline Row SmallRow(Key k, std::int64_t a, std::int64_t b = 0, std::string s = "x") {
  return MakeRow(k, {a, b, std::move(s)});
}

inline Row RandomSmallRow(Key k, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> v(-1000, 1000);
  std::uniform_int_distribution<int> len(0, 12);
  return MakeRow(k, {v(rng), v(rng), std::string(static_cast<std::size_t>(len(rng)), static_cast<char>('a' + k % 26))});
}

// Every row version ever written, replayed naively.
class VersionedOracle {
 public:
  void put(const Row& row, Version v) { hist_[row.key].emplace_back(v.value, row); }
  void erase(Key k, Version v) { hist_[k].emplace_back(v.value, std::nullopt); }

  std::optional<Row> get(Key k, Version read_v) const {
    auto it = hist_.find(k);
    if (it == hist_.end()) return std::nullopt;
    std::optional<Row> cur;
    for (const auto& [v, r] : it->second) {
      if (v <= read_v.value) cur = r;
    }
    return cur;
  }

  std::vector<Row> scan(KeyRange range, Version read_v) const {
    std::vector<Row> out;
    for (auto it = hist_.lower_bound(range.lo); it != hist_.end(); ++it) {
      if (range.hi && it->first >= *range.hi) break;
      if (auto r = get(it->first, read_v)) out.push_back(*r);
    }
    return out;
  }

  std::vector<Key> keys_at(Version read_v) const {
    std::vector<Key> out;
    for (const auto& [k, h] : hist_) {
      if (get(k, read_v)) out.push_back(k);
    }
    return out;
  }

 private:
  std::map<Key, std::vector<std::pair<std::uint64_t, std::optional<Row>>>> hist_;
};

}  // namespace synchro::testing
