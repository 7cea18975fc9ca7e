#include "synchro/layout.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "synchro/checksum.hpp"

namespace synchro {

std::uint64_t ColumnBucket::data_bytes() const {
  std::uint64_t n = 0;
  for (const auto& s : segments) n += s->size_bytes();
  return n;
}

std::uint64_t ColumnBucket::baseline_bytes() const {
  std::uint64_t n = 0;
  for (const auto& s : covered_baseline) n += s->size_bytes();
  return n;
}

std::size_t Layout::route_bucket_index(Key key) const {
  auto it = std::upper_bound(buckets.begin(), buckets.end(), key,
                             [](Key k, const BucketPtr& b) { return k < b->range.lo; });
  return static_cast<std::size_t>(it - buckets.begin()) - 1;
}

BucketPtr Layout::find_bucket(std::uint64_t id) const {
  for (const auto& b : buckets) {
    if (b->id == id) return b;
  }
  return nullptr;
}

SegmentPtr Layout::baseline_for(Key key) const {
  auto it = std::upper_bound(baseline.begin(), baseline.end(), key,
                             [](Key k, const SegmentPtr& s) { return k < s->min_key(); });
  if (it == baseline.begin()) return nullptr;
  --it;
  return key <= (*it)->max_key() ? *it : nullptr;
}

std::uint64_t Layout::delta_bytes() const {
  std::uint64_t n = 0;
  for (const auto& s : delta) n += s->size_bytes();
  return n;
}

std::size_t Layout::segment_count() const {
  std::size_t n = delta.size() + baseline.size();
  for (const auto& b : buckets) n += b->segments.size();
  return n;
}

// ---- VersionClock ----

void VersionClock::commit(Version v) {
  std::lock_guard lock(mu_);
  commit_locked(v);
}

Version VersionClock::visible() const {
  std::lock_guard lock(mu_);
  return visible_;
}

void VersionClock::restore(Version v) {
  counter_.advance_to(v);
  commit(v);
}

void VersionClock::unregister_reader_locked(Version v) {
  auto it = live_reads_.find(v.value);
  if (it != live_reads_.end()) live_reads_.erase(it);
}

Version VersionClock::min_active() const {
  std::lock_guard lock(mu_);
  return live_reads_.empty() ? visible_ : Version{*live_reads_.begin()};
}

// ---- Edits ----

bool LayoutEdit::empty() const {
  return !new_active && remove_frozen.empty() && remove_delta.empty() && add_delta.empty() &&
         remove_bucket_segments.empty() && add_bucket_segments.empty() && remove_baseline.empty() &&
         add_baseline.empty() && remove_buckets.empty() && add_buckets.empty();
}

namespace {

template <typename Ptr>
Status RemoveIds(std::vector<Ptr>& items, const std::vector<std::uint64_t>& ids, const char* what) {
  for (auto id : ids) {
    auto it = std::find_if(items.begin(), items.end(), [&](const Ptr& p) { return p->id() == id; });
    if (it == items.end()) return Status::Stale(std::string(what) + " " + std::to_string(id) + " no longer present");
    items.erase(it);
  }
  return Status::Ok();
}

bool Contains(const KeyRange& r, const ColumnSegment& s) { return r.contains(s.min_key()) && r.contains(s.max_key()); }

}  // namespace

StatusOr<Layout> ApplyEdit(const Layout& base, const LayoutEdit& edit, IdSource& bucket_ids) {
  Layout out = base;

  if (edit.new_active) {
    out.frozen.push_back(out.active);
    out.active = edit.new_active;
  }
  SYNCHRO_RETURN_IF_ERROR(RemoveIds(out.frozen, edit.remove_frozen, "frozen rowtable"));
  SYNCHRO_RETURN_IF_ERROR(RemoveIds(out.delta, edit.remove_delta, "delta segment"));
  out.delta.insert(out.delta.end(), edit.add_delta.begin(), edit.add_delta.end());

  std::vector<ColumnBucket> buckets;
  buckets.reserve(out.buckets.size() + edit.add_buckets.size());
  for (const auto& b : out.buckets) buckets.push_back(*b);
  for (auto id : edit.remove_buckets) {
    auto it = std::find_if(buckets.begin(), buckets.end(), [&](const ColumnBucket& b) { return b.id == id; });
    if (it == buckets.end()) return Status::Stale("bucket " + std::to_string(id) + " no longer present");
    buckets.erase(it);
  }
  for (const auto& nb : edit.add_buckets) {
    ColumnBucket b;
    b.id = bucket_ids.next();
    b.range = nb.range;
    b.segments = nb.segments;
    buckets.push_back(std::move(b));
  }
  std::sort(buckets.begin(), buckets.end(),
            [](const ColumnBucket& a, const ColumnBucket& b) { return a.range.lo < b.range.lo; });

  for (auto id : edit.remove_bucket_segments) {
    bool found = false;
    for (auto& b : buckets) {
      auto it = std::find_if(b.segments.begin(), b.segments.end(), [&](const SegmentPtr& s) { return s->id() == id; });
      if (it != b.segments.end()) {
        b.segments.erase(it);
        found = true;
        break;
      }
    }
    if (!found) return Status::Stale("bucket segment " + std::to_string(id) + " no longer present");
  }
  for (const auto& seg : edit.add_bucket_segments) {
    auto it = std::upper_bound(buckets.begin(), buckets.end(), seg->min_key(),
                               [](Key k, const ColumnBucket& b) { return k < b.range.lo; });
    if (it == buckets.begin() || !Contains((it - 1)->range, *seg)) {
      return Status::InvalidArgument("segment " + std::to_string(seg->id()) + " straddles a bucket boundary");
    }
    (it - 1)->segments.push_back(seg);
  }

  SYNCHRO_RETURN_IF_ERROR(RemoveIds(out.baseline, edit.remove_baseline, "baseline segment"));
  out.baseline.insert(out.baseline.end(), edit.add_baseline.begin(), edit.add_baseline.end());
  std::sort(out.baseline.begin(), out.baseline.end(),
            [](const SegmentPtr& a, const SegmentPtr& b) { return a->min_key() < b->min_key(); });

  // Recompute beta for every bucket from the baseline layer.
  std::size_t bi = 0;
  for (auto& b : buckets) {
    b.covered_baseline.clear();
    while (bi < out.baseline.size() && b.range.contains(out.baseline[bi]->min_key())) {
      b.covered_baseline.push_back(out.baseline[bi]);
      ++bi;
    }
  }

  out.buckets.clear();
  for (auto& b : buckets) out.buckets.push_back(std::make_shared<const ColumnBucket>(std::move(b)));
  SYNCHRO_RETURN_IF_ERROR(CheckLayoutInvariants(out));
  return out;
}

Status CheckLayoutInvariants(const Layout& layout) {
  if (!layout.active) return Status::Internal("layout without active rowtable");
  const auto& bs = layout.buckets;
  if (bs.empty()) return Status::Internal("layout without buckets");
  if (bs.front()->range.lo != kMinKey || bs.back()->range.hi) {
    return Status::Internal("buckets do not cover the key domain");
  }
  for (std::size_t i = 0; i < bs.size(); ++i) {
    if (bs[i]->range.empty()) return Status::Internal("empty bucket range");
    if (i + 1 < bs.size() && (!bs[i]->range.hi || *bs[i]->range.hi != bs[i + 1]->range.lo)) {
      return Status::Internal("bucket ranges not contiguous at " + ToString(bs[i]->range));
    }
    for (const auto& s : bs[i]->segments) {
      if (!Contains(bs[i]->range, *s)) return Status::Internal("bucket segment outside its bucket");
    }
    for (const auto& s : bs[i]->covered_baseline) {
      if (!Contains(bs[i]->range, *s)) {
        return Status::Internal("baseline segment " + std::to_string(s->id()) + " straddles bucket " +
                                ToString(bs[i]->range));
      }
    }
  }
  std::size_t covered = 0;
  for (const auto& b : bs) covered += b->covered_baseline.size();
  if (covered != layout.baseline.size()) return Status::Internal("baseline segment not covered by any bucket");
  for (std::size_t i = 1; i < layout.baseline.size(); ++i) {
    if (layout.baseline[i - 1]->max_key() >= layout.baseline[i]->min_key()) {
      return Status::Internal("baseline segments overlap");
    }
  }
  return Status::Ok();
}

// ---- Snapshot ----

Snapshot::Snapshot(Snapshot&& other) noexcept
    : mgr_(other.mgr_), layout_(std::move(other.layout_)), read_v_(other.read_v_), released_(other.released_) {
  other.mgr_ = nullptr;
  other.released_ = true;
}

Snapshot& Snapshot::operator=(Snapshot&& other) noexcept {
  if (this != &other) {
    if (mgr_ && !released_) (void)mgr_->release(*this);
    mgr_ = other.mgr_;
    layout_ = std::move(other.layout_);
    read_v_ = other.read_v_;
    released_ = other.released_;
    other.mgr_ = nullptr;
    other.released_ = true;
  }
  return *this;
}

Snapshot::~Snapshot() {
  if (mgr_ && !released_) (void)mgr_->release(*this);
}

// ---- LayoutManager ----

LayoutManager::LayoutManager(VersionClock* clock, RowTablePtr initial_active) : clock_(clock) {
  Layout l;
  l.active = std::move(initial_active);
  auto b = std::make_shared<ColumnBucket>();
  b->id = bucket_ids_.next();
  l.buckets.push_back(std::move(b));
  reset(std::move(l));
}

void LayoutManager::reset(Layout layout) {
  std::lock_guard lock(clock_->mutex());
  layout.layout_version = next_layout_version_++;
  for (const auto& b : layout.buckets) bucket_ids_.advance_past(b->id);
  latest_ = std::make_shared<const Layout>(std::move(layout));
  live_.clear();
  live_[latest_->layout_version] = Entry{latest_, 0};
}

Snapshot LayoutManager::acquire() {
  std::lock_guard lock(clock_->mutex());
  return acquire_locked(clock_->visible_locked());
}

Snapshot LayoutManager::acquire_locked(Version read_v) {
  clock_->register_reader_locked(read_v);
  ++live_[latest_->layout_version].refcount;
  return Snapshot(this, latest_, read_v);
}

Status LayoutManager::release(Snapshot& snap) {
  if (snap.released_ || !snap.layout_ || snap.mgr_ != this) {
    return Status::FailedPrecondition("snapshot already released");
  }
  LayoutPtr dead;
  {
    std::lock_guard lock(clock_->mutex());
    auto it = live_.find(snap.layout_->layout_version);
    if (it == live_.end() || it->second.refcount <= 0) {
      return Status::FailedPrecondition("snapshot already released");
    }
    clock_->unregister_reader_locked(snap.read_v_);
    if (--it->second.refcount == 0 && it->second.layout != latest_) {
      dead = std::move(it->second.layout);
      live_.erase(it);
    }
  }
  snap.released_ = true;
  if (dead) RunGc(dead);
  return Status::Ok();
}

StatusOr<LayoutPtr> LayoutManager::publish(const LayoutEdit& edit, std::optional<Version> commit) {
  return publish_with([&](const Layout& base) { return ApplyEdit(base, edit, bucket_ids_); }, commit);
}

StatusOr<LayoutPtr> LayoutManager::publish_with(const std::function<StatusOr<Layout>(const Layout&)>& fn,
                                                std::optional<Version> commit) {
  std::lock_guard publish(publish_mu_);
  LayoutPtr base = latest();
  auto next = fn(*base);
  if (!next.ok()) return next.status();
  LayoutPtr dead;
  LayoutPtr installed;
  {
    std::lock_guard lock(clock_->mutex());
    next->layout_version = next_layout_version_++;
    installed = std::make_shared<const Layout>(std::move(*next));
    auto old = live_.find(latest_->layout_version);
    if (old != live_.end() && old->second.refcount == 0) {
      dead = std::move(old->second.layout);
      live_.erase(old);
    }
    latest_ = installed;
    live_[installed->layout_version] = Entry{installed, 0};
    if (commit) clock_->commit_locked(*commit);
  }
  if (dead) RunGc(dead);
  return installed;
}

void LayoutManager::RunGc(const LayoutPtr& dead) {
  const Version min_active = clock_->min_active();
  for (const auto& s : dead->delta) s->gc_chain(min_active);
  for (const auto& b : dead->buckets) {
    for (const auto& s : b->segments) s->gc_chain(min_active);
  }
  for (const auto& s : dead->baseline) s->gc_chain(min_active);
}

LayoutPtr LayoutManager::latest() const {
  std::lock_guard lock(clock_->mutex());
  return latest_;
}

int LayoutManager::refcount(std::uint64_t layout_version) const {
  std::lock_guard lock(clock_->mutex());
  auto it = live_.find(layout_version);
  return it == live_.end() ? 0 : it->second.refcount;
}

bool LayoutManager::is_live(std::uint64_t layout_version) const {
  std::lock_guard lock(clock_->mutex());
  return live_.count(layout_version) > 0;
}

std::size_t LayoutManager::retired_count() const {
  std::lock_guard lock(clock_->mutex());
  return live_.size() - 1;
}

// ---- Split ----

StatusOr<Key> ChooseSplitKey(const ColumnBucket& bucket) {
  const auto& base = bucket.covered_baseline;
  if (base.size() < 2) return Status::FailedPrecondition("bucket covers fewer than two baseline segments");
  const std::uint64_t total = bucket.baseline_bytes();
  std::uint64_t left = 0;
  std::size_t best = 1;
  std::uint64_t best_diff = UINT64_MAX;
  for (std::size_t cut = 1; cut < base.size(); ++cut) {
    left += base[cut - 1]->size_bytes();
    const std::uint64_t right = total - left;
    const std::uint64_t diff = left > right ? left - right : right - left;
    if (diff <= best_diff) {
      best_diff = diff;
      best = cut;
    }
  }
  return base[best]->min_key();
}

StatusOr<LayoutEdit> split_bucket(const Layout& layout, std::uint64_t bucket_id, IdSource& segment_ids,
                                  Version horizon) {
  BucketPtr bucket = layout.find_bucket(bucket_id);
  if (!bucket) return Status::Stale("bucket " + std::to_string(bucket_id) + " no longer present");
  auto key = ChooseSplitKey(*bucket);
  if (!key.ok()) return key.status();

  NewBucket left{KeyRange{bucket->range.lo, *key}, {}};
  NewBucket right{KeyRange{*key, bucket->range.hi}, {}};
  for (const auto& seg : bucket->segments) {
    if (seg->max_key() < *key) {
      left.segments.push_back(seg);
    } else if (seg->min_key() >= *key) {
      right.segments.push_back(seg);
    } else {
      SegmentBuilder lb(seg->types());
      SegmentBuilder rb(seg->types());
      const VisibilityView vis = seg->visible_rows(horizon);
      for (std::uint32_t i = 0; i < seg->row_count(); ++i) {
        if (!vis.visible(i)) continue;
        SYNCHRO_RETURN_IF_ERROR((seg->keys()[i] < *key ? lb : rb).append_from(*seg, i));
      }
      if (lb.rows() > 0) left.segments.push_back(lb.finish(segment_ids.next(), seg->create_version()));
      if (rb.rows() > 0) right.segments.push_back(rb.finish(segment_ids.next(), seg->create_version()));
    }
  }
  LayoutEdit edit;
  edit.remove_buckets.push_back(bucket_id);
  edit.add_buckets.push_back(std::move(left));
  edit.add_buckets.push_back(std::move(right));
  return edit;
}

// ---- Manifest ----

Manifest ManifestOf(const Layout& layout) {
  Manifest m;
  m.layout_version = layout.layout_version;
  auto rec = [](std::string layer, const ColumnSegment& s) {
    return ManifestRecord{std::move(layer), s.id(), s.min_key(), s.max_key(), s.size_bytes()};
  };
  for (const auto& s : layout.delta) m.records.push_back(rec("DELTA", *s));
  for (const auto& b : layout.buckets) {
    m.bucket_ranges.emplace_back(b->id, b->range);
    for (const auto& s : b->segments) m.records.push_back(rec("BUCKET:" + std::to_string(b->id), *s));
  }
  for (const auto& s : layout.baseline) m.records.push_back(rec("BASE", *s));
  return m;
}

std::string EncodeManifest(const Manifest& m) {
  std::ostringstream out;
  out << "layout_version " << m.layout_version << "\n";
  for (const auto& [id, r] : m.bucket_ranges) {
    out << "BUCKETRANGE:" << id << " " << r.lo << " ";
    if (r.hi) out << *r.hi;
    else out << "inf";
    out << "\n";
  }
  for (const auto& r : m.records) {
    out << r.layer << " " << r.segment_id << " " << r.min_key << " " << r.max_key << " " << r.size_bytes << "\n";
  }
  std::string body = out.str();
  char crc[16];
  std::snprintf(crc, sizeof(crc), "%08x", Crc32c(body));
  return body + "crc32c " + crc + "\n";
}

StatusOr<Manifest> DecodeManifest(const std::string& text) {
  const auto crc_at = text.rfind("crc32c ");
  if (crc_at == std::string::npos || (crc_at != 0 && text[crc_at - 1] != '\n')) {
    return Status::Corruption("manifest missing checksum line");
  }
  const std::string body = text.substr(0, crc_at);
  unsigned long stored = 0;
  try {
    stored = std::stoul(text.substr(crc_at + 7), nullptr, 16);
  } catch (...) {
    return Status::Corruption("manifest checksum unreadable");
  }
  if (stored != Crc32c(body)) return Status::Corruption("manifest checksum mismatch");

  Manifest m;
  std::istringstream in(body);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "layout_version") {
      ls >> m.layout_version;
      header = !ls.fail();
    } else if (tag.rfind("BUCKETRANGE:", 0) == 0) {
      std::uint64_t id = std::stoull(tag.substr(12));
      KeyRange r;
      std::string hi;
      ls >> r.lo >> hi;
      if (ls.fail()) return Status::Corruption("bad bucket range line: " + line);
      if (hi != "inf") r.hi = std::stoll(hi);
      m.bucket_ranges.emplace_back(id, r);
    } else if (tag == "DELTA" || tag == "BASE" || tag.rfind("BUCKET:", 0) == 0) {
      ManifestRecord r;
      r.layer = tag;
      ls >> r.segment_id >> r.min_key >> r.max_key >> r.size_bytes;
      if (ls.fail()) return Status::Corruption("bad manifest record: " + line);
      m.records.push_back(std::move(r));
    } else {
      return Status::Corruption("unknown manifest line: " + line);
    }
  }
  if (!header) return Status::Corruption("manifest missing layout_version");
  return m;
}

Status WriteFileAtomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return Status::IoError("cannot open " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) return Status::IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) return Status::IoError("rename " + tmp + ": " + ec.message());
  return Status::Ok();
}

StatusOr<std::vector<std::uint8_t>> ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Status::IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

Status WriteManifest(const std::filesystem::path& path, const Manifest& m) {
  const std::string text = EncodeManifest(m);
  return WriteFileAtomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

StatusOr<Manifest> ReadManifest(const std::filesystem::path& path) {
  auto bytes = ReadFile(path);
  if (!bytes.ok()) return bytes.status();
  return DecodeManifest(std::string(bytes->begin(), bytes->end()));
}

}  // namespace synchro
