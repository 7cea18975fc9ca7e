#include "synchro/rowtable.hpp"

#include <algorithm>

namespace synchro {

RowTable::RowTable(std::uint64_t id, RowTableOptions options)
    : id_(id),
      options_(options),
      entries_(RowEntryOrder{}, Mix64(id)),
      bloom_(BloomFilter::ForKeys(
          std::max<std::size_t>(options.capacity_bytes / std::max<std::size_t>(options.expected_row_bytes, 1), 16))) {}

WriteResult RowTable::Append(RowEntry entry, std::size_t bytes) {
  if (frozen()) return WriteResult::kRejectedFrozen;
  const Key key = entry.key;
  const Version v = entry.version;
  bloom_.add(key);
  write_log_.emplace_back(key, v);
  if (entry.is_tombstone()) dlist_.emplace_back(key, v);
  entries_.insert(std::move(entry));
  if (v.value > max_version_.load(std::memory_order_relaxed)) {
    max_version_.store(v.value, std::memory_order_release);
  }
  const std::size_t now = size_bytes_.fetch_add(bytes, std::memory_order_acq_rel) + bytes;
  return now >= options_.capacity_bytes ? WriteResult::kFull : WriteResult::kOk;
}

WriteResult RowTable::put(RowPtr row, Version v) {
  const std::size_t bytes = row->payload_bytes();
  const Key key = row->key;
  return Append(RowEntry{key, v, std::move(row)}, bytes);
}

WriteResult RowTable::delete_mark(Key key, Version v) {
  return Append(RowEntry{key, v, nullptr}, kTombstoneBytes);
}

RowLookup RowTable::get(Key key, Version read_v) const {
  if (!bloom_.may_contain(key)) return {};
  SkipList<RowEntry, RowEntryOrder>::Iterator it(&entries_);
  // First entry with (key, version <= read_v) in (key asc, version desc) order.
  it.seek(RowEntry{key, read_v, nullptr});
  if (!it.valid() || it.value().key != key) return {};
  const RowEntry& e = it.value();
  RowLookup out;
  out.version = e.version;
  if (e.is_tombstone()) {
    out.kind = RowLookup::Kind::kTombstone;
  } else {
    out.kind = RowLookup::Kind::kFound;
    out.row = e.payload;
  }
  return out;
}

RowTable::Cursor::Cursor(const RowTable* table, KeyRange range, Version read_v)
    : it_(&table->entries_), range_(range), read_v_(read_v) {
  it_.seek(RowEntry{range_.lo, Version::Max(), nullptr});
  settle();
}

void RowTable::Cursor::settle() {
  valid_ = false;
  while (it_.valid()) {
    const RowEntry& e = it_.value();
    if (range_.hi && e.key >= *range_.hi) return;
    if (e.version <= read_v_) {
      current_ = e;
      valid_ = true;
      return;
    }
    it_.next();
  }
}

void RowTable::Cursor::next() {
  if (!valid_) return;
  const Key done = current_.key;
  while (it_.valid() && it_.value().key == done) it_.next();
  settle();
}

}  // namespace synchro
