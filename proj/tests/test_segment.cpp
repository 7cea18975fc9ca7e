#include <gtest/gtest.h>

#include <cstring>
#include <map>
#include <random>

#include "synchro/segment.hpp"
#include "test_util.hpp"

namespace synchro {
namespace {

using testing::SmallRow;
using testing::SmallSchema;

std::vector<Row> Rows(Key lo, Key hi, std::size_t slen = 1) {
  std::vector<Row> out;
  for (Key k = lo; k < hi; ++k) out.push_back(SmallRow(k, k * 2, -k, std::string(slen, 'q')));
  return out;
}

SegmentPtr One(const std::vector<Row>& rows, std::uint64_t id = 1, Version cv = Version{1}) {
  SegmentBuilder b(TypesOf(SmallSchema()));
  for (const auto& r : rows) EXPECT_TRUE(b.append(r).ok());
  return b.finish(id, cv);
}

TEST(Build, ZeroRows) {
  IdSource ids;
  auto out = build_segments({}, SmallSchema(), ids, BuildOptions{});
  ASSERT_TRUE(out.ok());
  EXPECT_TRUE(out->segments.empty());
  EXPECT_EQ(out->consumed, 0u);
}

TEST(Build, TwelveMegabytesAtFourMegabyteCap) {
  // ~4 KB rows, 3072 of them
  auto rows = Rows(0, 3072, 4000);
  IdSource ids;
  BuildOptions o;
  o.cap_bytes = 4u << 20;
  auto out = build_segments(rows, SmallSchema(), ids, o);
  ASSERT_TRUE(out.ok());
  ASSERT_GE(out->segments.size(), 3u);
  std::size_t total = 0;
  for (std::size_t i = 0; i < out->segments.size(); ++i) {
    const auto& s = out->segments[i];
    EXPECT_LE(s->size_bytes(), o.cap_bytes);
    if (i > 0) EXPECT_LT(out->segments[i - 1]->max_key(), s->min_key());
    total += s->row_count();
  }
  EXPECT_EQ(total, rows.size());
  // concatenation reproduces input
  std::size_t at = 0;
  for (const auto& s : out->segments)
    for (std::uint32_t r = 0; r < s->row_count(); ++r) ASSERT_EQ(s->row_at(r), rows[at++]);
}

TEST(Build, StopsAtHardBoundary) {
  auto rows = Rows(1, 201);
  IdSource ids;
  BuildOptions o;
  o.hard_boundary = 100;
  auto out = build_segments(rows, SmallSchema(), ids, o);
  ASSERT_TRUE(out.ok());
  for (const auto& s : out->segments)
    for (Key k : s->keys()) EXPECT_LT(k, 100);
  EXPECT_EQ(out->consumed, 99u);
  EXPECT_EQ(rows[out->consumed].key, 100);
}

TEST(Build, OversizedRowGetsOwnSegment) {
  std::vector<Row> rows{SmallRow(1, 0, 0, std::string(5000, 'x')), SmallRow(2, 0)};
  IdSource ids;
  BuildOptions o;
  o.cap_bytes = 1000;
  auto out = build_segments(rows, SmallSchema(), ids, o);
  ASSERT_TRUE(out.ok());
  ASSERT_EQ(out->segments.size(), 2u);
  EXPECT_EQ(out->segments[0]->row_count(), 1u);
}

TEST(Build, UnsortedInputRejected) {
  std::vector<Row> rows{SmallRow(2, 0), SmallRow(1, 0)};
  IdSource ids;
  EXPECT_FALSE(build_segments(rows, SmallSchema(), ids, BuildOptions{}).ok());
  std::vector<Row> dup{SmallRow(2, 0), SmallRow(2, 0)};
  EXPECT_FALSE(build_segments(dup, SmallSchema(), ids, BuildOptions{}).ok());
}

TEST(MarkDelete, SingleVisibleBeforeVersion) {
  auto s = One(Rows(0, 10));
  const std::uint32_t off[] = {3};
  ASSERT_TRUE(s->mark_delete(off, Version{10}).ok());
  EXPECT_TRUE(s->visible_rows(Version{9}).visible(3));
  EXPECT_FALSE(s->visible_rows(Version{10}).visible(3));
  EXPECT_EQ(s->delete_chain().pending_singles().size(), 1u);
}

TEST(MarkDelete, BatchFoldsPendingSingles) {
  auto s = One(Rows(0, 10));
  const std::uint32_t a[] = {1}, b[] = {4}, c[] = {6, 7};
  ASSERT_TRUE(s->mark_delete(a, Version{2}).ok());
  ASSERT_TRUE(s->mark_delete(b, Version{3}).ok());
  ASSERT_TRUE(s->mark_delete(c, Version{4}).ok());
  auto chain = s->delete_chain().chain();
  ASSERT_EQ(chain.size(), 1u);
  const Bits& bm = *chain.back().deleted;
  for (std::uint32_t i : {1u, 4u, 6u, 7u}) EXPECT_TRUE(bm.test(i));
  EXPECT_EQ(bm.count(), 4u);
  EXPECT_TRUE(s->delete_chain().pending_singles().empty());
  // readers between the singles still resolve them
  auto v2 = s->visible_rows(Version{2});
  EXPECT_FALSE(v2.visible(1));
  EXPECT_TRUE(v2.visible(4));
}

TEST(MarkDelete, OutOfRangeAndNonMonotone) {
  auto s = One(Rows(0, 10));
  const std::uint32_t bad[] = {10};
  EXPECT_FALSE(s->mark_delete(bad, Version{5}).ok());
  const std::uint32_t ok[] = {2};
  ASSERT_TRUE(s->mark_delete(ok, Version{5}).ok());
  const std::uint32_t next[] = {3};
  EXPECT_FALSE(s->mark_delete(next, Version{4}).ok());
}

TEST(VisibleRows, EmptyChainAllVisible) {
  auto s = One(Rows(0, 70));
  EXPECT_EQ(s->visible_rows(Version{100}).visible_count(), 70u);
}

TEST(VisibleRows, ChainPlusPending) {
  auto s = One(Rows(0, 10));
  const std::uint32_t batch[] = {0, 0};  // duplicate offsets collapse
  const std::uint32_t single[] = {2};
  ASSERT_TRUE(s->mark_delete(batch, Version{5}).ok());
  ASSERT_TRUE(s->mark_delete(single, Version{7}).ok());
  auto v6 = s->visible_rows(Version{6});
  EXPECT_FALSE(v6.visible(0));
  EXPECT_TRUE(v6.visible(2));
  auto v8 = s->visible_rows(Version{8});
  EXPECT_FALSE(v8.visible(0));
  EXPECT_FALSE(v8.visible(2));
}

// Random delete histories against a per-row replay.
TEST(VisibleRows, ReplayOracleAndMonotonicity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 150;
    auto s = One(Rows(0, static_cast<Key>(n)));
    std::map<std::uint32_t, std::uint64_t> first_delete;  // offset -> version
    std::uint64_t v = 1, horizon = 0;
    for (int step = 0; step < 30; ++step) {
      v += 1 + rng() % 3;
      std::vector<std::uint32_t> offs;
      const std::size_t cnt = (rng() % 3 == 0) ? 2 + rng() % 5 : 1;
      for (std::size_t i = 0; i < cnt; ++i) offs.push_back(static_cast<std::uint32_t>(rng() % n));
      ASSERT_TRUE(s->mark_delete(offs, Version{v}).ok());
      for (auto o : offs) first_delete.emplace(o, v);
      if (rng() % 7 == 0) {
        const std::uint64_t h = v - rng() % 4;
        s->gc_chain(Version{h});
        horizon = std::max(horizon, h);
      }
    }
    Bits prev(n, true);
    // gc may have dropped history below its horizon, so only check recent reads
    for (std::uint64_t rv = std::max(horizon, v - 3); rv <= v + 1; ++rv) {
      auto view = s->visible_rows(Version{rv});
      for (std::uint32_t i = 0; i < n; ++i) {
        auto it = first_delete.find(i);
        const bool deleted = it != first_delete.end() && it->second <= rv;
        ASSERT_EQ(view.visible(i), !deleted) << "trial " << trial << " row " << i << " read " << rv;
      }
      EXPECT_TRUE(view.bits().subset_of(prev));
      prev = view.bits();
    }
  }
}

TEST(VisibleRows, ReplayOracleWithoutGcAllVersions) {
  std::mt19937_64 rng(11);
  const std::size_t n = 64;
  auto s = One(Rows(0, n));
  std::map<std::uint32_t, std::uint64_t> first_delete;
  for (std::uint64_t v = 1; v <= 40; ++v) {
    std::vector<std::uint32_t> offs{static_cast<std::uint32_t>(rng() % n)};
    if (v % 5 == 0) offs.push_back(static_cast<std::uint32_t>(rng() % n));
    ASSERT_TRUE(s->mark_delete(offs, Version{v}).ok());
    for (auto o : offs) first_delete.emplace(o, v);
  }
  for (std::uint64_t rv = 0; rv <= 41; ++rv) {
    auto view = s->visible_rows(Version{rv});
    for (std::uint32_t i = 0; i < n; ++i) {
      auto it = first_delete.find(i);
      ASSERT_EQ(view.visible(i), !(it != first_delete.end() && it->second <= rv));
    }
  }
}

TEST(Read, ProjectionKeyColumn) {
  auto s = One(Rows(0, 1000));
  const std::size_t proj[] = {0};
  auto r = s->read(proj, Version::Max());
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r->columns.size(), 1u);
  EXPECT_EQ(std::get<Int64Column>(*r->columns[0]).values.size(), 1000u);
}

TEST(Read, TouchesOnlyProjectedColumns) {
  Schema bench = Schema::Benchmark();
  SegmentBuilder b(TypesOf(bench));
  for (Key k = 0; k < 50; ++k) {
    std::vector<Cell> tail;
    for (int i = 1; i <= 30; ++i) {
      if (i <= 15) tail.emplace_back(std::int64_t{k + i});
      else tail.emplace_back(std::string("s"));
    }
    ASSERT_TRUE(b.append(MakeRow(k, tail)).ok());
  }
  auto s = b.finish(1, Version{1});
  const std::vector<std::size_t> proj{0, 3, 7, 20, 29};
  ASSERT_TRUE(s->read(proj, Version::Max()).ok());
  for (std::size_t c = 0; c < 31; ++c) {
    const bool want = std::find(proj.begin(), proj.end(), c) != proj.end();
    EXPECT_EQ(s->column_reads(c), want ? 1u : 0u) << c;
  }
}

TEST(Read, EmptyOrInvalidProjectionRejected) {
  auto s = One(Rows(0, 5));
  EXPECT_FALSE(s->read({}, Version::Max()).ok());
  const std::size_t bad[] = {4};
  EXPECT_FALSE(s->read(bad, Version::Max()).ok());
}

TEST(MaybeContains, RangeAndBloom) {
  auto s = One(Rows(100, 200));
  EXPECT_FALSE(s->maybe_contains(99));
  EXPECT_FALSE(s->maybe_contains(200));
  for (Key k = 100; k < 200; ++k) EXPECT_TRUE(s->maybe_contains(k));
}

TEST(MaybeContains, FalsePositiveRate) {
  std::vector<Row> rows;
  for (Key k = 0; k < 20000; ++k) rows.push_back(SmallRow(k * 10, 0));
  auto s = One(rows);
  int fp = 0;
  // absent keys inside the key range so the range prune does not help
  for (int i = 0; i < 100000; ++i) fp += s->maybe_contains(static_cast<Key>(i) * 2 + 1);
  EXPECT_LE(fp, 2000);
}

TEST(GcChain, DropsOldBitmapsKeepsNewestBelowHorizon) {
  auto s = One(Rows(0, 10));
  const std::uint32_t a[] = {0, 1}, b[] = {2, 3}, c[] = {4, 5};
  ASSERT_TRUE(s->mark_delete(a, Version{3}).ok());
  ASSERT_TRUE(s->mark_delete(b, Version{5}).ok());
  ASSERT_TRUE(s->mark_delete(c, Version{9}).ok());
  std::vector<Bits> before;
  for (std::uint64_t rv = 6; rv <= 12; ++rv) before.push_back(s->visible_rows(Version{rv}).bits());
  s->gc_chain(Version{6});
  EXPECT_EQ(s->delete_chain().chain_versions(), (std::vector<Version>{Version{5}, Version{9}}));
  for (std::uint64_t rv = 6; rv <= 12; ++rv) EXPECT_EQ(s->visible_rows(Version{rv}).bits(), before[rv - 6]);
}

TEST(GcChain, NoOpCases) {
  auto s = One(Rows(0, 10));
  const std::uint32_t a[] = {0, 1}, b[] = {2, 3};
  ASSERT_TRUE(s->mark_delete(a, Version{3}).ok());
  ASSERT_TRUE(s->mark_delete(b, Version{5}).ok());
  s->gc_chain(Version{1});
  EXPECT_EQ(s->delete_chain().chain_versions().size(), 2u);

  auto t = One(Rows(0, 10));
  ASSERT_TRUE(t->mark_delete(a, Version{3}).ok());
  t->gc_chain(Version{100});
  EXPECT_EQ(t->delete_chain().chain_versions(), std::vector<Version>{Version{3}});
}

TEST(PayloadImmutability, ReadsUnchangedByDeletes) {
  auto s = One(Rows(0, 100, 3));
  auto enc_keys = s->keys();
  const std::size_t proj[] = {0, 1, 3};
  auto r1 = s->read(proj, Version{1});
  const std::uint32_t offs[] = {1, 2, 50};
  ASSERT_TRUE(s->mark_delete(offs, Version{4}).ok());
  auto r2 = s->read(proj, Version{5});
  ASSERT_TRUE(r1.ok() && r2.ok());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r1->columns[i], r2->columns[i]);
  EXPECT_EQ(enc_keys, s->keys());
}

TEST(Codec, RoundTripProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Row> rows;
    Key k = static_cast<Key>(rng() % 1000) - 500;
    const int n = 1 + static_cast<int>(rng() % 300);
    for (int i = 0; i < n; ++i) {
      k += 1 + static_cast<Key>(rng() % 5);
      rows.push_back(testing::RandomSmallRow(k, rng));
    }
    auto s = One(rows, 7 + trial, Version{static_cast<std::uint64_t>(trial + 1)});
    std::uint64_t v = trial + 2;
    for (int d = 0; d < 6; ++d) {
      std::vector<std::uint32_t> offs;
      const int cnt = 1 + static_cast<int>(rng() % 3);
      for (int i = 0; i < cnt; ++i) offs.push_back(static_cast<std::uint32_t>(rng() % n));
      ASSERT_TRUE(s->mark_delete(offs, Version{v++}).ok());
    }
    auto bytes = s->encode();
    auto back = ColumnSegment::decode(s->id(), bytes);
    ASSERT_TRUE(back.ok()) << back.status().message();
    EXPECT_TRUE((*back)->structurally_equal(*s));
    EXPECT_EQ((*back)->create_version(), s->create_version());
    EXPECT_EQ((*back)->size_bytes(), s->size_bytes());
  }
}

TEST(Codec, FlippedByteFailsChecksum) {
  auto s = One(Rows(0, 20));
  auto bytes = s->encode();
  bytes[bytes.size() / 2] ^= 0x40;
  auto back = ColumnSegment::decode(1, bytes);
  ASSERT_FALSE(back.ok());
  EXPECT_NE(back.status().message().find("checksum"), std::string::npos);
}

TEST(Codec, EmptyAndTruncated) {
  auto empty = ColumnSegment::decode(1, {});
  ASSERT_FALSE(empty.ok());
  EXPECT_NE(empty.status().message().find("magic"), std::string::npos);
  auto bytes = One(Rows(0, 20))->encode();
  bytes.resize(bytes.size() - 9);
  EXPECT_FALSE(ColumnSegment::decode(1, bytes).ok());
}

TEST(Codec, ZeroRowSegment) {
  auto s = One({});
  EXPECT_FALSE(s->maybe_contains(0));
  auto back = ColumnSegment::decode(1, s->encode());
  ASSERT_TRUE(back.ok()) << back.status().message();
  EXPECT_TRUE((*back)->structurally_equal(*s));
  EXPECT_EQ((*back)->row_count(), 0u);
}

TEST(Codec, HeaderLayout) {
  auto s = One(Rows(5, 9), 1, Version{42});
  auto b = s->encode();
  ASSERT_GE(b.size(), 16u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SSG1");
  std::uint32_t fmt = 0;
  std::memcpy(&fmt, b.data() + 4, 4);
  EXPECT_EQ(fmt, kSegmentFormatVersion);
  std::uint16_t cols = 0;
  std::memcpy(&cols, b.data() + 8, 2);
  EXPECT_EQ(cols, 4u);
}

}  // namespace
}  // namespace synchro
