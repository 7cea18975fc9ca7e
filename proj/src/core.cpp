#include "synchro/core.hpp"

#include <cstdlib>
#include <iostream>
#include <set>

namespace synchro {

const char* StatusCodeName(StatusCode code) {
  switch (code) {
    case StatusCode::kOk: return "OK";
    case StatusCode::kInvalidArgument: return "InvalidArgument";
    case StatusCode::kDuplicateKey: return "DuplicateKey";
    case StatusCode::kNotFound: return "NotFound";
    case StatusCode::kFrozen: return "Frozen";
    case StatusCode::kCorruption: return "Corruption";
    case StatusCode::kStale: return "Stale";
    case StatusCode::kContended: return "Contended";
    case StatusCode::kOverflow: return "Overflow";
    case StatusCode::kFailedPrecondition: return "FailedPrecondition";
    case StatusCode::kIoError: return "IoError";
    case StatusCode::kInternal: return "Internal";
  }
  return "Unknown";
}

std::string Status::ToString() const {
  if (ok()) return "OK";
  return std::string(StatusCodeName(code_)) + ": " + message_;
}

Version VersionCounter::next_version() {
  std::uint64_t prev = last_.fetch_add(1, std::memory_order_acq_rel);
  if (prev == std::numeric_limits<std::uint64_t>::max() - 1) {
    std::cerr << "version counter exhausted\n";
    std::abort();
  }
  return Version{prev + 1};
}

void VersionCounter::advance_to(Version v) {
  std::uint64_t cur = last_.load(std::memory_order_acquire);
  while (cur < v.value && !last_.compare_exchange_weak(cur, v.value, std::memory_order_acq_rel)) {
  }
}

StatusOr<Schema> Schema::Make(std::vector<ColumnDef> columns) {
  if (columns.empty()) return Status::InvalidArgument("schema needs at least the key column");
  if (columns[0].type != CellType::kInt64) {
    return Status::InvalidArgument("column 0 must be the int64 primary key");
  }
  std::set<std::string> names;
  for (const auto& c : columns) {
    if (!names.insert(c.name).second) return Status::InvalidArgument("duplicate column name: " + c.name);
  }
  if (columns.size() > 0xFFFF) return Status::InvalidArgument("too many columns");
  return Schema(std::move(columns));
}

Schema Schema::Benchmark() {
  std::vector<ColumnDef> cols;
  cols.reserve(31);
  for (int i = 0; i <= 30; ++i) {
    cols.push_back({"col_" + std::to_string(i), i <= 15 ? CellType::kInt64 : CellType::kUtf8});
  }
  return Schema(std::move(cols));
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

int Schema::row_cost_weight() const {
  int w = 0;
  for (const auto& c : columns_) w += CostWeight(c.type);
  return w;
}

bool Schema::operator==(const Schema& other) const {
  if (columns_.size() != other.columns_.size()) return false;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name != other.columns_[i].name || columns_[i].type != other.columns_[i].type) {
      return false;
    }
  }
  return true;
}

std::size_t Row::payload_bytes() const {
  std::size_t bytes = sizeof(Key);
  for (const auto& c : cells) {
    if (const auto* s = std::get_if<std::string>(&c)) {
      bytes += s->size();
    } else {
      bytes += sizeof(std::int64_t);
    }
  }
  return bytes;
}

Row MakeRow(Key key, std::vector<Cell> tail) {
  Row r;
  r.key = key;
  r.cells.reserve(tail.size() + 1);
  r.cells.emplace_back(key);
  for (auto& c : tail) r.cells.push_back(std::move(c));
  return r;
}

Status validate_row(const Schema& schema, const Row& row) {
  if (row.cells.size() != schema.column_count()) {
    return Status::InvalidArgument("arity mismatch: row has " + std::to_string(row.cells.size()) +
                                   " cells, schema has " + std::to_string(schema.column_count()));
  }
  for (std::size_t i = 0; i < row.cells.size(); ++i) {
    if (TypeOf(row.cells[i]) != schema.type(i)) {
      return Status::InvalidArgument("type mismatch at column " + std::to_string(i));
    }
  }
  if (std::get<std::int64_t>(row.cells[0]) != row.key) {
    return Status::InvalidArgument("key mismatch: cell 0 is " +
                                   std::to_string(std::get<std::int64_t>(row.cells[0])) +
                                   ", key is " + std::to_string(row.key));
  }
  return Status::Ok();
}

std::string ToString(const KeyRange& r) {
  return "[" + std::to_string(r.lo) + ", " + (r.hi ? std::to_string(*r.hi) : std::string("inf")) + ")";
}

}  // namespace synchro
