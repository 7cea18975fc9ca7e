#include "synchro/segment.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "synchro/checksum.hpp"

namespace synchro {

void IdSource::advance_past(std::uint64_t id) {
  std::uint64_t cur = next_.load(std::memory_order_relaxed);
  while (cur <= id && !next_.compare_exchange_weak(cur, id + 1, std::memory_order_relaxed)) {
  }
}

// ---- Bits ----

Bits::Bits(std::size_t n, bool value) : size_(n), words_((n + 63) / 64, value ? ~std::uint64_t{0} : 0) {
  ClearTail();
}

void Bits::ClearTail() {
  if (size_ % 64 != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
  }
}

std::size_t Bits::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

Bits& Bits::operator|=(const Bits& other) {
  for (std::size_t i = 0; i < words_.size() && i < other.words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

Bits Bits::inverted() const {
  Bits out = *this;
  for (auto& w : out.words_) w = ~w;
  out.ClearTail();
  return out;
}

bool Bits::subset_of(const Bits& other) const {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if ((words_[i] & ~other.words_[i]) != 0) return false;
  }
  return true;
}

// ---- DeleteChain ----

DeleteChain::DeleteChain(std::size_t row_count) : row_count_(row_count), state_(std::make_shared<State>()) {}

DeleteChain::DeleteChain(const DeleteChain& other) : row_count_(other.row_count_), state_(other.Load()) {}

DeleteChain::StatePtr DeleteChain::Load() const {
  std::lock_guard lock(mu_);
  return state_;
}

void DeleteChain::Store(StatePtr next) {
  std::lock_guard lock(mu_);
  state_ = std::move(next);
}

Version DeleteChain::LastVersion(const State& s) {
  Version v;
  if (!s.chain.empty()) v = s.chain.back().version;
  if (!s.singles.empty()) v = std::max(v, s.singles.back().version);
  return v;
}

Version DeleteChain::last_version() const { return LastVersion(*Load()); }

namespace {

// Index of the newest bitmap with version <= read_v, or -1.
std::ptrdiff_t BaseIndex(const std::vector<DeleteChain::ChainBitmap>& chain, Version read_v) {
  auto it = std::upper_bound(chain.begin(), chain.end(), read_v,
                             [](Version v, const DeleteChain::ChainBitmap& b) { return v < b.version; });
  return (it - chain.begin()) - 1;
}

// First single with version > v.
std::vector<DeleteChain::Single>::const_iterator SinglesAfter(const std::vector<DeleteChain::Single>& singles,
                                                              Version v) {
  return std::upper_bound(singles.begin(), singles.end(), v,
                          [](Version x, const DeleteChain::Single& s) { return x < s.version; });
}

}  // namespace

Bits DeleteChain::DeletedAt(const State& s, std::size_t rows, Version read_v) {
  const std::ptrdiff_t base = BaseIndex(s.chain, read_v);
  Bits out = base >= 0 ? *s.chain[static_cast<std::size_t>(base)].deleted : Bits(rows);
  const Version from = base >= 0 ? s.chain[static_cast<std::size_t>(base)].version : Version::Zero();
  for (auto it = SinglesAfter(s.singles, from); it != s.singles.end() && it->version <= read_v; ++it) {
    out.set(it->offset);
  }
  return out;
}

Status DeleteChain::mark(std::span<const std::uint32_t> offsets, Version v) {
  if (offsets.empty()) return Status::Ok();
  for (auto off : offsets) {
    if (off >= row_count_) {
      return Status::InvalidArgument("delete offset " + std::to_string(off) + " out of range (rows=" +
                                     std::to_string(row_count_) + ")");
    }
  }
  std::lock_guard write(write_mu_);
  StatePtr cur = Load();
  if (v <= LastVersion(*cur)) {
    return Status::InvalidArgument("delete version " + std::to_string(v.value) + " not above chain version " +
                                   std::to_string(LastVersion(*cur).value));
  }
  auto next = std::make_shared<State>(*cur);
  if (offsets.size() == 1) {
    next->singles.push_back(Single{v, offsets[0]});
  } else {
    Bits bits = DeletedAt(*cur, row_count_, v);
    for (auto off : offsets) bits.set(off);
    next->chain.push_back(ChainBitmap{v, std::make_shared<const Bits>(std::move(bits))});
  }
  Store(std::move(next));
  return Status::Ok();
}

Bits DeleteChain::deleted_at(Version read_v) const { return DeletedAt(*Load(), row_count_, read_v); }

bool DeleteChain::is_deleted(std::uint32_t offset, Version read_v) const {
  StatePtr s = Load();
  const std::ptrdiff_t base = BaseIndex(s->chain, read_v);
  Version from;
  if (base >= 0) {
    const auto& b = s->chain[static_cast<std::size_t>(base)];
    if (b.deleted->test(offset)) return true;
    from = b.version;
  }
  for (auto it = SinglesAfter(s->singles, from); it != s->singles.end() && it->version <= read_v; ++it) {
    if (it->offset == offset) return true;
  }
  return false;
}

void DeleteChain::gc(Version min_active_read_v) {
  std::lock_guard write(write_mu_);
  StatePtr cur = Load();
  {
    // Nothing to fold and at most one bitmap below the horizon: leave the state alone.
    const Version last_bitmap = cur->chain.empty() ? Version::Zero() : cur->chain.back().version;
    auto p = SinglesAfter(cur->singles, last_bitmap);
    const bool fold = p != cur->singles.end() && p->version < min_active_read_v;
    const bool trim = cur->chain.size() > 1 && cur->chain[1].version < min_active_read_v;
    const bool drop_singles = !cur->chain.empty() && cur->chain.front().version < min_active_read_v &&
                              !cur->singles.empty() && cur->singles.front().version <= cur->chain.front().version;
    if (!fold && !trim && !drop_singles) return;
  }
  auto next = std::make_shared<State>(*cur);

  // Fold pending singles no live reader can distinguish any more.
  const Version last_bitmap = next->chain.empty() ? Version::Zero() : next->chain.back().version;
  auto first_pending = SinglesAfter(next->singles, last_bitmap);
  auto fold_end = first_pending;
  while (fold_end != next->singles.end() && fold_end->version < min_active_read_v) ++fold_end;
  if (fold_end != first_pending) {
    Bits bits = next->chain.empty() ? Bits(row_count_) : *next->chain.back().deleted;
    for (auto it = first_pending; it != fold_end; ++it) bits.set(it->offset);
    const Version at = std::prev(fold_end)->version;
    next->chain.push_back(ChainBitmap{at, std::make_shared<const Bits>(std::move(bits))});
  }

  // Keep the newest bitmap below the horizon as the base; older ones are unreachable.
  if (min_active_read_v.value == 0) {
    Store(std::move(next));
    return;
  }
  const std::ptrdiff_t keep = BaseIndex(next->chain, Version{min_active_read_v.value - 1});
  if (keep >= 0) {
    next->chain.erase(next->chain.begin(), next->chain.begin() + keep);
    const Version base_v = next->chain.front().version;
    next->singles.erase(next->singles.begin(), SinglesAfter(next->singles, base_v));
  }
  Store(std::move(next));
}

std::vector<DeleteEvent> DeleteChain::events_after(Version v) const {
  StatePtr s = Load();
  Bits seen = DeletedAt(*s, row_count_, v);
  std::vector<DeleteEvent> out;
  auto bi = std::upper_bound(s->chain.begin(), s->chain.end(), v,
                             [](Version x, const ChainBitmap& b) { return x < b.version; });
  auto si = SinglesAfter(s->singles, v);
  while (bi != s->chain.end() || si != s->singles.end()) {
    // Singles win ties so a folded bitmap never re-reports them.
    if (si != s->singles.end() && (bi == s->chain.end() || si->version <= bi->version)) {
      if (!seen.test(si->offset)) {
        seen.set(si->offset);
        out.push_back(DeleteEvent{si->offset, si->version});
      }
      ++si;
    } else {
      const Bits& bits = *bi->deleted;
      for (std::size_t w = 0; w < bits.words().size(); ++w) {
        std::uint64_t fresh = bits.words()[w] & ~seen.words()[w];
        while (fresh != 0) {
          const auto off = static_cast<std::uint32_t>(w * 64 + static_cast<std::size_t>(std::countr_zero(fresh)));
          fresh &= fresh - 1;
          seen.set(off);
          out.push_back(DeleteEvent{off, bi->version});
        }
      }
      ++bi;
    }
  }
  return out;
}

std::vector<Version> DeleteChain::chain_versions() const {
  std::vector<Version> out;
  for (const auto& b : Load()->chain) out.push_back(b.version);
  return out;
}

std::vector<DeleteChain::Single> DeleteChain::pending_singles() const {
  StatePtr s = Load();
  const Version last = s->chain.empty() ? Version::Zero() : s->chain.back().version;
  return {SinglesAfter(s->singles, last), s->singles.cend()};
}

std::vector<DeleteChain::Single> DeleteChain::all_singles() const { return Load()->singles; }

std::vector<DeleteChain::ChainBitmap> DeleteChain::chain() const { return Load()->chain; }

bool DeleteChain::empty() const {
  StatePtr s = Load();
  return s->chain.empty() && s->singles.empty();
}

StatusOr<DeleteChain> DeleteChain::FromParts(std::size_t row_count, std::vector<ChainBitmap> chain,
                                             std::vector<Single> singles) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (!chain[i].deleted || chain[i].deleted->size() != row_count) {
      return Status::Corruption("delete bitmap size mismatch");
    }
    if (i > 0 && chain[i].version <= chain[i - 1].version) {
      return Status::Corruption("delete chain versions not increasing");
    }
  }
  for (std::size_t i = 0; i < singles.size(); ++i) {
    if (singles[i].offset >= row_count) return Status::Corruption("single delete offset out of range");
    if (i > 0 && singles[i].version <= singles[i - 1].version) {
      return Status::Corruption("single delete versions not increasing");
    }
  }
  DeleteChain out(row_count);
  auto st = std::make_shared<State>();
  st->chain = std::move(chain);
  st->singles = std::move(singles);
  out.state_ = std::move(st);
  return out;
}

bool DeleteChain::operator==(const DeleteChain& other) const {
  if (row_count_ != other.row_count_) return false;
  StatePtr a = Load();
  StatePtr b = other.Load();
  if (a->chain.size() != b->chain.size() || a->singles.size() != b->singles.size()) return false;
  for (std::size_t i = 0; i < a->chain.size(); ++i) {
    if (a->chain[i].version != b->chain[i].version || *a->chain[i].deleted != *b->chain[i].deleted) return false;
  }
  for (std::size_t i = 0; i < a->singles.size(); ++i) {
    if (a->singles[i].version != b->singles[i].version || a->singles[i].offset != b->singles[i].offset) return false;
  }
  return true;
}

// ---- ColumnSegment ----

ColumnSegment::ColumnSegment(std::uint64_t id, std::vector<CellType> types, std::vector<ColumnData> columns,
                             std::uint64_t size_bytes, BloomFilter bloom, DeleteChain chain, Version create_version)
    : id_(id),
      types_(std::move(types)),
      columns_(std::move(columns)),
      size_bytes_(size_bytes),
      bloom_(std::move(bloom)),
      chain_(std::move(chain)),
      create_version_(create_version),
      column_reads_(new std::atomic<std::uint64_t>[types_.size()]) {
  for (std::size_t i = 0; i < types_.size(); ++i) column_reads_[i].store(0, std::memory_order_relaxed);
}

std::uint32_t ColumnSegment::lower_bound(Key k) const {
  const auto& ks = keys();
  return static_cast<std::uint32_t>(std::lower_bound(ks.begin(), ks.end(), k) - ks.begin());
}

std::optional<std::uint32_t> ColumnSegment::find(Key k) const {
  const std::uint32_t off = lower_bound(k);
  if (off < row_count() && keys()[off] == k) return off;
  return std::nullopt;
}

bool ColumnSegment::maybe_contains(Key k) const {
  if (row_count() == 0 || k < min_key() || k > max_key()) return false;
  return bloom_.may_contain(k);
}

Status ColumnSegment::mark_delete(std::span<const std::uint32_t> offsets, Version v) {
  return chain_.mark(offsets, v);
}

VisibilityView ColumnSegment::visible_rows(Version read_v) const {
  return VisibilityView(chain_.deleted_at(read_v).inverted());
}

StatusOr<ProjectedRead> ColumnSegment::read(std::span<const std::size_t> projection, Version read_v) const {
  if (projection.empty()) return Status::InvalidArgument("empty projection");
  ProjectedRead out;
  for (auto col : projection) {
    if (col >= columns_.size()) return Status::InvalidArgument("column ordinal " + std::to_string(col) + " out of range");
  }
  for (auto col : projection) {
    column_reads_[col].fetch_add(1, std::memory_order_relaxed);
    out.ordinals.push_back(col);
    out.columns.push_back(&columns_[col]);
  }
  out.visibility = visible_rows(read_v);
  return out;
}

Cell ColumnSegment::cell(std::size_t col, std::uint32_t row) const {
  if (types_[col] == CellType::kInt64) return int_at(col, row);
  return std::string(str_at(col, row));
}

Row ColumnSegment::row_at(std::uint32_t row) const {
  Row r;
  r.key = keys()[row];
  r.cells.reserve(types_.size());
  for (std::size_t c = 0; c < types_.size(); ++c) r.cells.push_back(cell(c, row));
  return r;
}

std::uint64_t ColumnSegment::row_bytes(std::uint32_t row) const {
  std::uint64_t n = 0;
  for (std::size_t c = 0; c < types_.size(); ++c) {
    n += types_[c] == CellType::kInt64 ? 8 : 4 + str_at(c, row).size();
  }
  return n;
}

bool ColumnSegment::structurally_equal(const ColumnSegment& other) const {
  if (types_ != other.types_ || row_count() != other.row_count() || size_bytes_ != other.size_bytes_ ||
      create_version_ != other.create_version_) {
    return false;
  }
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (types_[c] == CellType::kInt64) {
      if (std::get<Int64Column>(columns_[c]).values != std::get<Int64Column>(other.columns_[c]).values) return false;
    } else {
      const auto& a = std::get<Utf8Column>(columns_[c]);
      const auto& b = std::get<Utf8Column>(other.columns_[c]);
      if (a.offsets != b.offsets || a.bytes != b.bytes) return false;
    }
  }
  return bloom_ == other.bloom_ && chain_ == other.chain_;
}

// ---- Encoding ----

namespace {

class Writer {
 public:
  std::vector<std::uint8_t> buf;

  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    if constexpr (std::endian::native == std::endian::little) {
      raw(v.data(), v.size() * sizeof(T));
    } else {
      for (auto x : v) put(x);
    }
  }
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (std::size_t i = 0; i < 8; ++i) buf[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  bool ok() const { return ok_; }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) {
    if (p > b_.size()) ok_ = false;
    else pos_ = p;
  }

  template <typename T>
  T get() {
    if (!need(sizeof(T))) return T{};
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(b_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (!need(n)) return {};
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> array(std::size_t n) {
    std::vector<T> out;
    if (n > b_.size() / sizeof(T) || !need(n * sizeof(T))) {
      ok_ = false;
      return out;
    }
    out.resize(n);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), b_.data() + pos_, n * sizeof(T));
      pos_ += n * sizeof(T);
    } else {
      for (auto& x : out) x = get<T>();
    }
    return out;
  }

 private:
  bool need(std::size_t n) {
    if (!ok_ || b_.size() - pos_ < n) {
      ok_ = false;
      return false;
    }
    return true;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

std::vector<std::uint8_t> BitsToBytes(const Bits& bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(bits.words()[i / 8] >> (8 * (i % 8)));
  }
  return out;
}

Bits BytesToBits(std::span<const std::uint8_t> bytes, std::size_t n) {
  Bits out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if ((bytes[i / 8] >> (i % 8)) & 1u) out.set(i);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> ColumnSegment::encode() const {
  Writer w;
  w.raw(kSegmentMagic, 4);
  w.put<std::uint32_t>(kSegmentFormatVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(types_.size()));
  for (auto t : types_) w.put<std::uint8_t>(static_cast<std::uint8_t>(t));
  const std::uint64_t n = row_count();
  w.put<std::uint64_t>(n);
  w.put<std::int64_t>(min_key());
  w.put<std::int64_t>(max_key());
  w.put<std::uint64_t>(create_version_.value);

  const std::size_t dir_at = w.buf.size();
  for (std::size_t c = 0; c < types_.size(); ++c) {
    w.put<std::uint64_t>(0);
    w.put<std::uint64_t>(0);
  }
  for (std::size_t c = 0; c < types_.size(); ++c) {
    const std::size_t start = w.buf.size();
    if (types_[c] == CellType::kInt64) {
      w.array(std::get<Int64Column>(columns_[c]).values);
    } else {
      const auto& col = std::get<Utf8Column>(columns_[c]);
      w.array(col.offsets);
      w.raw(col.bytes.data(), col.bytes.size());
    }
    w.patch_u64(dir_at + c * 16, start);
    w.patch_u64(dir_at + c * 16 + 8, w.buf.size() - start);
  }

  w.put<std::uint64_t>(bloom_.num_bits());
  w.put<std::uint8_t>(bloom_.num_hashes());
  auto bloom_bytes = bloom_.to_bytes();
  w.raw(bloom_bytes.data(), bloom_bytes.size());

  const auto chain = chain_.chain();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(chain.size()));
  for (const auto& b : chain) {
    w.put<std::uint64_t>(b.version.value);
    auto bytes = BitsToBytes(*b.deleted);
    w.raw(bytes.data(), bytes.size());
  }
  const auto singles = chain_.all_singles();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(singles.size()));
  for (const auto& s : singles) {
    w.put<std::uint64_t>(s.version.value);
    w.put<std::uint64_t>(s.offset);
  }

  w.put<std::uint32_t>(Crc32c(w.buf));
  return std::move(w.buf);
}

StatusOr<SegmentPtr> ColumnSegment::decode(std::uint64_t id, std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kSegmentMagic, 4) != 0) {
    return Status::Corruption("bad magic");
  }
  if (bytes.size() < 8) return Status::Corruption("truncated segment");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (Crc32c(body) != tail.get<std::uint32_t>()) return Status::Corruption("checksum mismatch");

  Reader r(body);
  r.bytes(4);
  if (r.get<std::uint32_t>() != kSegmentFormatVersion) return Status::Corruption("unsupported format version");
  const auto ncols = r.get<std::uint16_t>();
  std::vector<CellType> types;
  for (std::uint16_t i = 0; i < ncols && r.ok(); ++i) {
    const auto tag = r.get<std::uint8_t>();
    if (tag > 1) return Status::Corruption("unknown column type tag");
    types.push_back(static_cast<CellType>(tag));
  }
  if (ncols == 0 || (r.ok() && types[0] != CellType::kInt64)) return Status::Corruption("bad key column");
  const auto n = r.get<std::uint64_t>();
  const auto min_key = r.get<std::int64_t>();
  const auto max_key = r.get<std::int64_t>();
  const Version create{r.get<std::uint64_t>()};
  if (!r.ok()) return Status::Corruption("truncated header");
  if (n > body.size()) return Status::Corruption("bad row count");

  std::vector<std::pair<std::uint64_t, std::uint64_t>> dir(ncols);
  for (auto& [off, len] : dir) {
    off = r.get<std::uint64_t>();
    len = r.get<std::uint64_t>();
  }
  if (!r.ok()) return Status::Corruption("truncated column directory");

  std::vector<ColumnData> columns;
  std::uint64_t size_bytes = 0;
  std::size_t end = r.pos();
  for (std::size_t c = 0; c < ncols; ++c) {
    const auto [off, len] = dir[c];
    if (off > body.size() || len > body.size() - off) return Status::Corruption("column out of bounds");
    Reader cr(body.subspan(off, len));
    if (types[c] == CellType::kInt64) {
      Int64Column col;
      col.values = cr.array<std::int64_t>(n);
      if (!cr.ok() || cr.pos() != len) return Status::Corruption("bad int64 column");
      columns.emplace_back(std::move(col));
    } else {
      Utf8Column col;
      col.offsets = cr.array<std::uint32_t>(n + 1);
      if (!cr.ok() || col.offsets[0] != 0) return Status::Corruption("bad utf8 offsets");
      for (std::size_t i = 0; i < n; ++i) {
        if (col.offsets[i + 1] < col.offsets[i]) return Status::Corruption("utf8 offsets not monotone");
      }
      auto blob = cr.bytes(col.offsets[n]);
      if (!cr.ok() || cr.pos() != len) return Status::Corruption("bad utf8 column");
      col.bytes.assign(reinterpret_cast<const char*>(blob.data()), blob.size());
      columns.emplace_back(std::move(col));
    }
    size_bytes += len;
    end = std::max<std::size_t>(end, off + len);
  }
  const auto& keys = std::get<Int64Column>(columns[0]).values;
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (keys[i] <= keys[i - 1]) return Status::Corruption("keys not strictly ascending");
  }
  if (keys.empty() ? (min_key != 0 || max_key != 0) : (keys.front() != min_key || keys.back() != max_key)) {
    return Status::Corruption("key range mismatch");
  }

  r.seek(end);
  const auto m = r.get<std::uint64_t>();
  const auto k = r.get<std::uint8_t>();
  if (!r.ok() || m == 0 || m > body.size() * 8) return Status::Corruption("bad bloom header");
  auto bloom_bytes = r.bytes((m + 7) / 8);
  if (!r.ok()) return Status::Corruption("truncated bloom");
  BloomFilter bloom = BloomFilter::FromBytes(m, k, bloom_bytes);

  const auto chain_count = r.get<std::uint32_t>();
  std::vector<DeleteChain::ChainBitmap> chain;
  for (std::uint32_t i = 0; i < chain_count && r.ok(); ++i) {
    const Version v{r.get<std::uint64_t>()};
    auto bits = r.bytes((n + 7) / 8);
    if (!r.ok()) break;
    chain.push_back({v, std::make_shared<const Bits>(BytesToBits(bits, n))});
  }
  const auto single_count = r.get<std::uint32_t>();
  std::vector<DeleteChain::Single> singles;
  for (std::uint32_t i = 0; i < single_count && r.ok(); ++i) {
    const Version v{r.get<std::uint64_t>()};
    const auto off = r.get<std::uint64_t>();
    if (off >= n) return Status::Corruption("single delete offset out of range");
    singles.push_back({v, static_cast<std::uint32_t>(off)});
  }
  if (!r.ok()) return Status::Corruption("truncated delete chain");
  if (r.pos() != body.size()) return Status::Corruption("trailing bytes");
  auto dc = DeleteChain::FromParts(n, std::move(chain), std::move(singles));
  if (!dc.ok()) return dc.status();

  return SegmentPtr(new ColumnSegment(id, std::move(types), std::move(columns), size_bytes, std::move(bloom),
                                      std::move(*dc), create));
}

// ---- Builder ----

std::vector<CellType> TypesOf(const Schema& schema) {
  std::vector<CellType> out;
  for (const auto& c : schema.columns()) out.push_back(c.type);
  return out;
}

SegmentBuilder::SegmentBuilder(std::vector<CellType> types) : types_(std::move(types)), size_bytes_(EmptySize(types_)) {
  for (auto t : types_) {
    if (t == CellType::kInt64) columns_.emplace_back(Int64Column{});
    else columns_.emplace_back(Utf8Column{});
  }
}

std::uint64_t SegmentBuilder::EmptySize(const std::vector<CellType>& types) {
  std::uint64_t n = 0;
  for (auto t : types) n += t == CellType::kUtf8 ? 4 : 0;
  return n;
}

std::uint64_t SegmentBuilder::row_bytes(const Row& row) const {
  std::uint64_t n = 0;
  for (std::size_t c = 0; c < types_.size(); ++c) {
    n += types_[c] == CellType::kInt64 ? 8 : 4 + std::get<std::string>(row.cells[c]).size();
  }
  return n;
}

Status SegmentBuilder::CheckOrder(Key k) {
  if (last_key_ && k <= *last_key_) {
    return Status::InvalidArgument("segment input not strictly ascending at key " + std::to_string(k));
  }
  last_key_ = k;
  return Status::Ok();
}

Status SegmentBuilder::append(const Row& row) {
  if (row.cells.size() != types_.size()) return Status::InvalidArgument("row arity mismatch");
  SYNCHRO_RETURN_IF_ERROR(CheckOrder(row.key));
  size_bytes_ += row_bytes(row);
  for (std::size_t c = 0; c < types_.size(); ++c) {
    if (types_[c] == CellType::kInt64) {
      std::get<Int64Column>(columns_[c]).values.push_back(std::get<std::int64_t>(row.cells[c]));
    } else {
      auto& col = std::get<Utf8Column>(columns_[c]);
      col.bytes += std::get<std::string>(row.cells[c]);
      col.offsets.push_back(static_cast<std::uint32_t>(col.bytes.size()));
    }
  }
  ++rows_;
  return Status::Ok();
}

Status SegmentBuilder::append_from(const ColumnSegment& seg, std::uint32_t row) {
  if (seg.types() != types_) return Status::InvalidArgument("segment schema mismatch");
  SYNCHRO_RETURN_IF_ERROR(CheckOrder(seg.keys()[row]));
  size_bytes_ += seg.row_bytes(row);
  for (std::size_t c = 0; c < types_.size(); ++c) {
    if (types_[c] == CellType::kInt64) {
      std::get<Int64Column>(columns_[c]).values.push_back(seg.int_at(c, row));
    } else {
      auto& col = std::get<Utf8Column>(columns_[c]);
      col.bytes += seg.str_at(c, row);
      col.offsets.push_back(static_cast<std::uint32_t>(col.bytes.size()));
    }
  }
  ++rows_;
  return Status::Ok();
}

SegmentPtr SegmentBuilder::finish(std::uint64_t id, Version create_version) {
  BloomFilter bloom = BloomFilter::ForKeys(rows_);
  for (Key k : std::get<Int64Column>(columns_[0]).values) bloom.add(k);
  std::vector<ColumnData> cols;
  cols.swap(columns_);
  for (auto t : types_) {
    if (t == CellType::kInt64) columns_.emplace_back(Int64Column{});
    else columns_.emplace_back(Utf8Column{});
  }
  const std::size_t rows = rows_;
  const std::uint64_t size = size_bytes_;
  rows_ = 0;
  size_bytes_ = EmptySize(types_);
  return SegmentPtr(new ColumnSegment(id, types_, std::move(cols), size, std::move(bloom), DeleteChain(rows),
                                      create_version));
}

StatusOr<BuildOutput> build_segments(std::span<const Row> rows, const Schema& schema, IdSource& ids,
                                     const BuildOptions& options) {
  BuildOutput out;
  SegmentBuilder builder(TypesOf(schema));
  std::optional<Key> prev;
  for (const Row& row : rows) {
    if (prev && row.key <= *prev) {
      return Status::InvalidArgument("build input not strictly ascending at key " + std::to_string(row.key));
    }
    prev = row.key;
    if (options.hard_boundary && row.key >= *options.hard_boundary) break;
    const std::uint64_t rb = builder.row_bytes(row);
    if (!builder.fits(rb, options.cap_bytes)) {
      out.segments.push_back(builder.finish(ids.next(), options.create_version));
    }
    SYNCHRO_RETURN_IF_ERROR(builder.append(row));
    ++out.consumed;
  }
  if (builder.rows() > 0) out.segments.push_back(builder.finish(ids.next(), options.create_version));
  return out;
}

}  // namespace synchro
