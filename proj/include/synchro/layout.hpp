#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synchro/core.hpp"
#include "synchro/rowtable.hpp"
#include "synchro/segment.hpp"

namespace synchro {

// Transition-layer partition. Segments may overlap each other but stay inside range.
struct ColumnBucket {
  std::uint64_t id = 0;
  KeyRange range;
  std::vector<SegmentPtr> segments;  // oldest first
  // Baseline segments inside range (beta). Derived on every publish.
  std::vector<SegmentPtr> covered_baseline;

  std::uint64_t data_bytes() const;
  std::uint64_t baseline_bytes() const;
};

using BucketPtr = std::shared_ptr<const ColumnBucket>;

// One immutable version of a table across all four layers.
struct Layout {
  std::uint64_t layout_version = 0;
  RowTablePtr active;
  std::vector<RowTablePtr> frozen;     // oldest first
  std::vector<SegmentPtr> delta;       // oldest first
  std::vector<BucketPtr> buckets;      // ascending, disjoint, covering the key domain
  std::vector<SegmentPtr> baseline;    // ascending, disjoint

  std::size_t route_bucket_index(Key key) const;
  const ColumnBucket& route_bucket(Key key) const { return *buckets[route_bucket_index(key)]; }
  BucketPtr find_bucket(std::uint64_t id) const;
  // Baseline segment whose key range contains key, if any.
  SegmentPtr baseline_for(Key key) const;
  std::uint64_t delta_bytes() const;
  std::size_t segment_count() const;
};

using LayoutPtr = std::shared_ptr<const Layout>;

// Publishes writer versions. Readers take (layout, visible version) under mu so the pair
// is always consistent; writers commit under the same mutex.
class VersionClock {
 public:
  VersionClock() = default;

  Version allocate() { return counter_.next_version(); }
  void commit(Version v);
  // Caller holds mutex().
  void commit_locked(Version v) {
    if (v > visible_) visible_ = v;
  }
  Version visible() const;
  // Raises both the counter and the visible version, used when reopening saved data.
  void restore(Version v);

  std::mutex& mutex() const { return mu_; }
  // Caller holds mutex().
  Version visible_locked() const { return visible_; }
  void register_reader_locked(Version v) { live_reads_.insert(v.value); }
  void unregister_reader_locked(Version v);
  // Smallest read version of any live snapshot, or the visible version when there is none.
  Version min_active() const;

 private:
  VersionCounter counter_;
  mutable std::mutex mu_;
  Version visible_;
  std::multiset<std::uint64_t> live_reads_;
};

struct NewBucket {
  KeyRange range;
  std::vector<SegmentPtr> segments;
};

// Copy-on-write change set. Removals name ids that must exist in the latest layout;
// otherwise the edit is stale.
struct LayoutEdit {
  RowTablePtr new_active;  // when set, the current active table moves to the frozen list
  std::vector<std::uint64_t> remove_frozen;
  std::vector<std::uint64_t> remove_delta;
  std::vector<SegmentPtr> add_delta;
  std::vector<std::uint64_t> remove_bucket_segments;
  // Each is placed into the bucket whose range contains it.
  std::vector<SegmentPtr> add_bucket_segments;
  std::vector<std::uint64_t> remove_baseline;
  std::vector<SegmentPtr> add_baseline;
  std::vector<std::uint64_t> remove_buckets;
  std::vector<NewBucket> add_buckets;

  bool empty() const;
};

// Applies edit to base, assigning fresh bucket ids from bucket_ids. Checks all layout
// invariants on the result.
StatusOr<Layout> ApplyEdit(const Layout& base, const LayoutEdit& edit, IdSource& bucket_ids);
Status CheckLayoutInvariants(const Layout& layout);

class LayoutManager;

// Reference to a layout plus the read version it was acquired at. Releases on destruction.
class Snapshot {
 public:
  Snapshot() = default;
  Snapshot(Snapshot&& other) noexcept;
  Snapshot& operator=(Snapshot&& other) noexcept;
  Snapshot(const Snapshot&) = delete;
  Snapshot& operator=(const Snapshot&) = delete;
  ~Snapshot();

  const Layout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  Version read_version() const { return read_v_; }
  bool valid() const { return layout_ != nullptr; }

 private:
  friend class LayoutManager;
  Snapshot(LayoutManager* mgr, LayoutPtr layout, Version read_v)
      : mgr_(mgr), layout_(std::move(layout)), read_v_(read_v) {}

  LayoutManager* mgr_ = nullptr;
  LayoutPtr layout_;
  Version read_v_;
  bool released_ = false;
};

class LayoutManager {
 public:
  LayoutManager(VersionClock* clock, RowTablePtr initial_active);

  Snapshot acquire();
  // Caller holds clock->mutex(); read_v is the version to read at.
  Snapshot acquire_locked(Version read_v);
  // Error on double release.
  Status release(Snapshot& snap);

  // Installs latest + edit atomically with respect to acquire. When commit is set, the
  // clock's visible version advances to it in the same step.
  StatusOr<LayoutPtr> publish(const LayoutEdit& edit, std::optional<Version> commit = std::nullopt);
  // Runs fn on the latest layout under the publish lock and installs the layout it returns.
  StatusOr<LayoutPtr> publish_with(const std::function<StatusOr<Layout>(const Layout&)>& fn,
                                   std::optional<Version> commit = std::nullopt);

  LayoutPtr latest() const;
  IdSource& bucket_ids() { return bucket_ids_; }
  VersionClock& clock() { return *clock_; }

  // Introspection.
  int refcount(std::uint64_t layout_version) const;
  bool is_live(std::uint64_t layout_version) const;
  std::size_t retired_count() const;

  // Replaces the whole state; used when opening saved data.
  void reset(Layout layout);

 private:
  struct Entry {
    LayoutPtr layout;
    int refcount = 0;
  };

  void RunGc(const LayoutPtr& dead);

  VersionClock* clock_;
  std::mutex publish_mu_;  // one publish at a time
  LayoutPtr latest_;       // guarded by clock_->mutex()
  std::map<std::uint64_t, Entry> live_;  // guarded by clock_->mutex()
  std::uint64_t next_layout_version_ = 1;
  IdSource bucket_ids_;
};

// Cut key for splitting a bucket: the baseline boundary minimizing |left - right| bytes,
// ties toward the later cut. Requires >= 2 covered baseline segments.
StatusOr<Key> ChooseSplitKey(const ColumnBucket& bucket);

// Edit replacing bucket with two halves at the chosen key. Segments straddling the key are
// rebuilt; rows deleted at or before horizon are dropped from rebuilt segments.
StatusOr<LayoutEdit> split_bucket(const Layout& layout, std::uint64_t bucket_id, IdSource& segment_ids,
                                  Version horizon);

// Manifest persistence.
struct ManifestRecord {
  std::string layer;  // DELTA, BUCKET:<id>, BASE
  std::uint64_t segment_id = 0;
  Key min_key = 0;
  Key max_key = 0;
  std::uint64_t size_bytes = 0;
};

struct Manifest {
  std::uint64_t layout_version = 0;
  std::vector<ManifestRecord> records;
  std::vector<std::pair<std::uint64_t, KeyRange>> bucket_ranges;
};

Manifest ManifestOf(const Layout& layout);
std::string EncodeManifest(const Manifest& m);
StatusOr<Manifest> DecodeManifest(const std::string& text);
Status WriteManifest(const std::filesystem::path& path, const Manifest& m);
StatusOr<Manifest> ReadManifest(const std::filesystem::path& path);

Status WriteFileAtomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
StatusOr<std::vector<std::uint8_t>> ReadFile(const std::filesystem::path& path);

}  // namespace synchro
