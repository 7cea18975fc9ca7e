#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "synchro/status.hpp"

namespace synchro {

using Key = std::int64_t;

inline constexpr Key kMinKey = std::numeric_limits<Key>::min();
inline constexpr Key kMaxKey = std::numeric_limits<Key>::max();

// Monotone write version. Version 0 means "visible to everyone".
struct Version {
  std::uint64_t value = 0;

  constexpr auto operator<=>(const Version&) const = default;

  static constexpr Version Zero() { return Version{0}; }
  static constexpr Version Max() { return Version{std::numeric_limits<std::uint64_t>::max()}; }
};

class VersionCounter {
 public:
  VersionCounter() = default;
  explicit VersionCounter(Version start) : last_(start.value) {}

  // Strictly increasing across all callers.
  Version next_version();
  Version current() const { return Version{last_.load(std::memory_order_acquire)}; }
  // Raises the counter so the next allocation is > v. Used when reopening persisted data.
  void advance_to(Version v);

 private:
  std::atomic<std::uint64_t> last_{0};
};

enum class CellType : std::uint8_t { kInt64 = 0, kUtf8 = 1 };

using Cell = std::variant<std::int64_t, std::string>;

inline CellType TypeOf(const Cell& c) {
  return std::holds_alternative<std::int64_t>(c) ? CellType::kInt64 : CellType::kUtf8;
}

// Column weight used by the analytical cost model: int=1, string=4.
inline int CostWeight(CellType t) { return t == CellType::kInt64 ? 1 : 4; }

struct ColumnDef {
  std::string name;
  CellType type = CellType::kInt64;
};

// Ordered column list; column 0 is always the int64 primary key.
class Schema {
 public:
  Schema() = default;

  static StatusOr<Schema> Make(std::vector<ColumnDef> columns);
  // 31 columns: col_0 key, col_1..col_15 int64, col_16..col_30 utf8.
  static Schema Benchmark();

  std::size_t column_count() const { return columns_.size(); }
  const ColumnDef& column(std::size_t i) const { return columns_[i]; }
  CellType type(std::size_t i) const { return columns_[i].type; }
  const std::vector<ColumnDef>& columns() const { return columns_; }
  std::optional<std::size_t> find(std::string_view name) const;
  int row_cost_weight() const;

  bool operator==(const Schema& other) const;

 private:
  explicit Schema(std::vector<ColumnDef> columns) : columns_(std::move(columns)) {}
  std::vector<ColumnDef> columns_;
};

struct Row {
  Key key = 0;
  std::vector<Cell> cells;

  // Encoded payload bytes: 8 for the key plus 8 per int cell and the byte length of each string.
  std::size_t payload_bytes() const;
  std::int64_t int_at(std::size_t col) const { return std::get<std::int64_t>(cells[col]); }
  const std::string& str_at(std::size_t col) const { return std::get<std::string>(cells[col]); }

  bool operator==(const Row&) const = default;
};

using RowPtr = std::shared_ptr<const Row>;

Row MakeRow(Key key, std::vector<Cell> tail);

// OK iff arity and per-cell types match and cell 0 equals the key.
Status validate_row(const Schema& schema, const Row& row);

// Half-open key interval [lo, hi); hi == nullopt means +infinity.
struct KeyRange {
  Key lo = kMinKey;
  std::optional<Key> hi;

  static KeyRange All() { return {}; }
  static KeyRange Of(Key lo, Key hi) { return {lo, hi}; }

  bool contains(Key k) const { return k >= lo && (!hi || k < *hi); }
  bool empty() const { return hi && *hi <= lo; }
  // Intersects the closed interval [min_key, max_key].
  bool overlaps_closed(Key min_key, Key max_key) const {
    return max_key >= lo && (!hi || min_key < *hi);
  }
  bool operator==(const KeyRange&) const = default;
};

std::string ToString(const KeyRange& r);

}  // namespace synchro
