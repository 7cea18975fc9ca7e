#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "synchro/bloom.hpp"
#include "synchro/core.hpp"

namespace synchro {

class IdSource {
 public:
  explicit IdSource(std::uint64_t first = 1) : next_(first) {}
  std::uint64_t next() { return next_.fetch_add(1, std::memory_order_relaxed); }
  void advance_past(std::uint64_t id);

 private:
  std::atomic<std::uint64_t> next_;
};

// Fixed-size bit set; used for delete bitmaps (1 = deleted) and visibility views (1 = visible).
class Bits {
 public:
  Bits() = default;
  explicit Bits(std::size_t n, bool value = false);

  std::size_t size() const { return size_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  void reset(std::size_t i) { words_[i / 64] &= ~(std::uint64_t{1} << (i % 64)); }
  std::size_t count() const;
  Bits& operator|=(const Bits& other);
  Bits inverted() const;
  // Every set bit in *this is also set in other.
  bool subset_of(const Bits& other) const;
  const std::vector<std::uint64_t>& words() const { return words_; }

  bool operator==(const Bits&) const = default;

 private:
  void ClearTail();

  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

struct DeleteEvent {
  std::uint32_t offset = 0;
  Version version;

  bool operator==(const DeleteEvent&) const = default;
};

// Append-only multi-version delete record for one segment.
//
// Batch deletes append a cumulative bitmap; single-row deletes are appended to a list of
// singles. A bitmap at version v covers every deletion at versions <= v. Singles whose
// version is above the newest bitmap are "pending". Singles that a later bitmap absorbed
// are kept until gc so readers between the two versions still resolve them.
class DeleteChain {
 public:
  struct ChainBitmap {
    Version version;
    std::shared_ptr<const Bits> deleted;
  };
  struct Single {
    Version version;
    std::uint32_t offset = 0;
  };

  explicit DeleteChain(std::size_t row_count);
  DeleteChain(const DeleteChain& other);

  Status mark(std::span<const std::uint32_t> offsets, Version v);
  Bits deleted_at(Version read_v) const;
  bool is_deleted(std::uint32_t offset, Version read_v) const;
  void gc(Version min_active_read_v);
  // Deletions with version > v, one event per newly deleted row, in version order.
  std::vector<DeleteEvent> events_after(Version v) const;

  std::size_t row_count() const { return row_count_; }
  Version last_version() const;
  std::vector<Version> chain_versions() const;
  std::vector<Single> pending_singles() const;
  std::vector<Single> all_singles() const;
  std::vector<ChainBitmap> chain() const;
  bool empty() const;

  // Used by decode.
  static StatusOr<DeleteChain> FromParts(std::size_t row_count, std::vector<ChainBitmap> chain,
                                         std::vector<Single> singles);

  bool operator==(const DeleteChain& other) const;

 private:
  struct State {
    std::vector<ChainBitmap> chain;
    std::vector<Single> singles;  // version ascending
  };
  using StatePtr = std::shared_ptr<const State>;

  StatePtr Load() const;
  void Store(StatePtr next);
  static Version LastVersion(const State& s);
  static Bits DeletedAt(const State& s, std::size_t rows, Version read_v);

  std::size_t row_count_;
  std::mutex write_mu_;    // serializes mark and gc
  mutable std::mutex mu_;  // guards state_ pointer swaps only
  StatePtr state_;
};

struct Int64Column {
  std::vector<std::int64_t> values;
};

struct Utf8Column {
  std::vector<std::uint32_t> offsets{0};  // row_count + 1 entries
  std::string bytes;

  std::string_view at(std::size_t row) const {
    return std::string_view(bytes).substr(offsets[row], offsets[row + 1] - offsets[row]);
  }
};

using ColumnData = std::variant<Int64Column, Utf8Column>;

class VisibilityView {
 public:
  VisibilityView() = default;
  explicit VisibilityView(Bits visible) : visible_(std::move(visible)) {}

  bool visible(std::size_t row) const { return visible_.test(row); }
  std::size_t size() const { return visible_.size(); }
  std::size_t visible_count() const { return visible_.count(); }
  const Bits& bits() const { return visible_; }

 private:
  Bits visible_;
};

struct ProjectedRead {
  std::vector<std::size_t> ordinals;
  std::vector<const ColumnData*> columns;
  VisibilityView visibility;
};

class ColumnSegment;
using SegmentPtr = std::shared_ptr<ColumnSegment>;

// Immutable key-sorted columnar table. The payload never changes after build; only the
// delete chain grows.
class ColumnSegment {
 public:
  std::uint64_t id() const { return id_; }
  std::size_t row_count() const { return keys().size(); }
  // 0 for an empty segment.
  Key min_key() const { return keys().empty() ? 0 : keys().front(); }
  Key max_key() const { return keys().empty() ? 0 : keys().back(); }
  std::uint64_t size_bytes() const { return size_bytes_; }
  Version create_version() const { return create_version_; }
  const std::vector<CellType>& types() const { return types_; }
  std::size_t column_count() const { return types_.size(); }
  const BloomFilter& bloom() const { return bloom_; }
  const DeleteChain& delete_chain() const { return chain_; }

  const std::vector<Key>& keys() const { return std::get<Int64Column>(columns_[0]).values; }
  const ColumnData& column_data(std::size_t col) const { return columns_[col]; }

  // First offset whose key is >= k.
  std::uint32_t lower_bound(Key k) const;
  std::optional<std::uint32_t> find(Key k) const;

  // False means the key is definitely absent.
  bool maybe_contains(Key k) const;

  Status mark_delete(std::span<const std::uint32_t> offsets, Version v);
  VisibilityView visible_rows(Version read_v) const;
  bool is_deleted(std::uint32_t offset, Version read_v) const { return chain_.is_deleted(offset, read_v); }
  void gc_chain(Version min_active_read_v) { chain_.gc(min_active_read_v); }

  // Projected columns plus visibility; the caller applies visibility.
  StatusOr<ProjectedRead> read(std::span<const std::size_t> projection, Version read_v) const;

  Cell cell(std::size_t col, std::uint32_t row) const;
  std::int64_t int_at(std::size_t col, std::uint32_t row) const {
    return std::get<Int64Column>(columns_[col]).values[row];
  }
  std::string_view str_at(std::size_t col, std::uint32_t row) const {
    return std::get<Utf8Column>(columns_[col]).at(row);
  }
  Row row_at(std::uint32_t row) const;
  // Bytes one row contributes to size_bytes.
  std::uint64_t row_bytes(std::uint32_t row) const;

  // How many times read() has returned each column.
  std::uint64_t column_reads(std::size_t col) const {
    return column_reads_[col].load(std::memory_order_relaxed);
  }

  std::vector<std::uint8_t> encode() const;
  static StatusOr<SegmentPtr> decode(std::uint64_t id, std::span<const std::uint8_t> bytes);

  // Payload, Bloom filter and delete chain all equal.
  bool structurally_equal(const ColumnSegment& other) const;

 private:
  friend class SegmentBuilder;
  ColumnSegment(std::uint64_t id, std::vector<CellType> types, std::vector<ColumnData> columns,
                std::uint64_t size_bytes, BloomFilter bloom, DeleteChain chain, Version create_version);

  std::uint64_t id_;
  std::vector<CellType> types_;
  std::vector<ColumnData> columns_;
  std::uint64_t size_bytes_;
  BloomFilter bloom_;
  DeleteChain chain_;
  Version create_version_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> column_reads_;
};

inline constexpr char kSegmentMagic[4] = {'S', 'S', 'G', '1'};
inline constexpr std::uint32_t kSegmentFormatVersion = 1;
inline constexpr std::uint64_t kDefaultSegmentCap = 4u << 20;

// Accumulates key-ascending rows into one segment.
class SegmentBuilder {
 public:
  explicit SegmentBuilder(std::vector<CellType> types);

  static std::uint64_t EmptySize(const std::vector<CellType>& types);
  std::uint64_t row_bytes(const Row& row) const;

  std::size_t rows() const { return rows_; }
  std::uint64_t size_bytes() const { return size_bytes_; }
  std::optional<Key> last_key() const { return last_key_; }
  // An empty builder accepts any row so oversized rows still get a segment.
  bool fits(std::uint64_t row_bytes, std::uint64_t cap) const {
    return rows_ == 0 || size_bytes_ + row_bytes <= cap;
  }

  Status append(const Row& row);
  Status append_from(const ColumnSegment& seg, std::uint32_t row);

  // Resets the builder. Requires rows() > 0.
  SegmentPtr finish(std::uint64_t id, Version create_version);

 private:
  Status CheckOrder(Key k);

  std::vector<CellType> types_;
  std::vector<ColumnData> columns_;
  std::size_t rows_ = 0;
  std::uint64_t size_bytes_;
  std::optional<Key> last_key_;
};

struct BuildOptions {
  std::uint64_t cap_bytes = kDefaultSegmentCap;
  // Output stops before the first key >= hard_boundary.
  std::optional<Key> hard_boundary;
  Version create_version;
};

struct BuildOutput {
  std::vector<SegmentPtr> segments;
  // Rows consumed; rows[consumed..] are the remainder past the boundary.
  std::size_t consumed = 0;
};

// Packs strictly key-ascending rows into segments of at most cap_bytes each.
StatusOr<BuildOutput> build_segments(std::span<const Row> rows, const Schema& schema, IdSource& ids,
                                     const BuildOptions& options);

std::vector<CellType> TypesOf(const Schema& schema);

}  // namespace synchro
