#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "synchro/bloom.hpp"
#include "synchro/core.hpp"
#include "synchro/skiplist.hpp"

namespace synchro {

// One versioned entry. A null payload is a tombstone.
struct RowEntry {
  Key key = 0;
  Version version;
  RowPtr payload;

  bool is_tombstone() const { return payload == nullptr; }
};

struct RowEntryOrder {
  // key ascending, version descending
  bool operator()(const RowEntry& a, const RowEntry& b) const {
    if (a.key != b.key) return a.key < b.key;
    return a.version > b.version;
  }
};

struct RowTableOptions {
  std::size_t capacity_bytes = 64u << 20;
  // Used to size the Bloom filter at creation.
  std::size_t expected_row_bytes = 4096;
};

enum class WriteResult {
  kOk,
  kFull,            // admitted; the caller must freeze and rotate
  kRejectedFrozen,  // not admitted
};

struct RowLookup {
  enum class Kind { kAbsent, kTombstone, kFound };
  Kind kind = Kind::kAbsent;
  Version version;
  RowPtr row;

  bool found() const { return kind == Kind::kFound; }
};

// Ordered in-memory delta table. One writer at a time; readers are always safe, including
// across freeze(). Each entry carries its own version, so a reader at read_v ignores
// anything newer.
class RowTable {
 public:
  static constexpr std::size_t kTombstoneBytes = 16;

  RowTable(std::uint64_t id, RowTableOptions options);

  std::uint64_t id() const { return id_; }

  WriteResult put(RowPtr row, Version v);
  WriteResult delete_mark(Key key, Version v);
  RowLookup get(Key key, Version read_v) const;

  // Idempotent. Afterwards every mutation is rejected.
  void freeze() { frozen_.store(true, std::memory_order_release); }
  bool frozen() const { return frozen_.load(std::memory_order_acquire); }

  std::size_t size_bytes() const { return size_bytes_.load(std::memory_order_acquire); }
  std::size_t capacity_bytes() const { return options_.capacity_bytes; }
  std::size_t entry_count() const { return entries_.size(); }
  bool maybe_contains(Key key) const { return bloom_.may_contain(key); }
  bool empty() const { return entries_.size() == 0; }

  // Resolved view of [range) at read_v: one entry per key, keys ascending.
  class Cursor {
   public:
    Cursor(const RowTable* table, KeyRange range, Version read_v);
    bool valid() const { return valid_; }
    const RowEntry& entry() const { return current_; }
    void next();

   private:
    void settle();

    using List = SkipList<RowEntry, RowEntryOrder>;
    List::Iterator it_;
    KeyRange range_;
    Version read_v_;
    RowEntry current_;
    bool valid_ = false;
  };

  Cursor scan(KeyRange range, Version read_v) const { return Cursor(this, range, read_v); }

  // Invalidation records (key, version) for every tombstone, in write order.
  // Only safe to read while writers are excluded.
  const std::vector<std::pair<Key, Version>>& dlist() const { return dlist_; }
  // Every write (put or tombstone) in version order. Same access rule as dlist().
  const std::vector<std::pair<Key, Version>>& write_log() const { return write_log_; }
  Version max_version() const { return Version{max_version_.load(std::memory_order_acquire)}; }

 private:
  WriteResult Append(RowEntry entry, std::size_t bytes);

  const std::uint64_t id_;
  const RowTableOptions options_;
  SkipList<RowEntry, RowEntryOrder> entries_;
  BloomFilter bloom_;
  std::atomic<std::size_t> size_bytes_{0};
  std::atomic<bool> frozen_{false};
  std::atomic<std::uint64_t> max_version_{0};
  std::vector<std::pair<Key, Version>> dlist_;
  std::vector<std::pair<Key, Version>> write_log_;
};

using RowTablePtr = std::shared_ptr<RowTable>;

}  // namespace synchro
