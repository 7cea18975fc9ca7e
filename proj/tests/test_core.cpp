#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "synchro/bloom.hpp"
#include "synchro/rowtable.hpp"
#include "test_util.hpp"

namespace synchro {
namespace {

using testing::SmallRow;
using testing::SmallSchema;

TEST(VersionCounter, FreshCounterStartsAtOne) {
  VersionCounter c;
  EXPECT_EQ(c.next_version().value, 1u);
}

TEST(VersionCounter, FourthCallReturnsFour) {
  VersionCounter c;
  for (int i = 0; i < 3; ++i) (void)c.next_version();
  EXPECT_EQ(c.next_version().value, 4u);
}

TEST(VersionCounter, ConcurrentAllocationsAreUnique) {
  VersionCounter c;
  constexpr int kThreads = 4;
  constexpr int kPer = 250000;
  std::vector<std::vector<std::uint64_t>> got(kThreads);
  std::vector<std::thread> ts;
  for (int t = 0; t < kThreads; ++t) {
    ts.emplace_back([&, t] {
      got[t].reserve(kPer);
      for (int i = 0; i < kPer; ++i) got[t].push_back(c.next_version().value);
    });
  }
  for (auto& t : ts) t.join();
  std::set<std::uint64_t> all;
  for (const auto& g : got) {
    // strictly increasing per caller
    for (std::size_t i = 1; i < g.size(); ++i) ASSERT_LT(g[i - 1], g[i]);
    all.insert(g.begin(), g.end());
  }
  EXPECT_EQ(all.size(), static_cast<std::size_t>(kThreads) * kPer);
}

TEST(VersionCounter, AdvanceTo) {
  VersionCounter c;
  c.advance_to(Version{41});
  EXPECT_EQ(c.next_version().value, 42u);
}

TEST(Schema, BenchmarkHas31Columns) {
  Schema s = Schema::Benchmark();
  ASSERT_EQ(s.column_count(), 31u);
  EXPECT_EQ(s.column(0).name, "col_0");
  EXPECT_EQ(s.type(0), CellType::kInt64);
  EXPECT_EQ(s.type(15), CellType::kInt64);
  EXPECT_EQ(s.type(16), CellType::kUtf8);
  EXPECT_EQ(s.type(30), CellType::kUtf8);
}

TEST(Schema, RejectsDuplicateNamesAndNonIntKey) {
  EXPECT_FALSE(Schema::Make({{"a", CellType::kInt64}, {"a", CellType::kInt64}}).ok());
  EXPECT_FALSE(Schema::Make({{"a", CellType::kUtf8}}).ok());
  EXPECT_FALSE(Schema::Make({}).ok());
}

TEST(ValidateRow, ConformingBenchmarkRow) {
  Schema s = Schema::Benchmark();
  std::vector<Cell> tail;
  for (int i = 1; i <= 30; ++i) {
    if (i <= 15) tail.emplace_back(std::int64_t{i});
    else tail.emplace_back(std::string("v"));
  }
  EXPECT_TRUE(validate_row(s, MakeRow(9, tail)).ok());
}

TEST(ValidateRow, ArityViolation) {
  Schema s = Schema::Benchmark();
  std::vector<Cell> tail(29, std::int64_t{0});
  Status st = validate_row(s, MakeRow(1, tail));
  EXPECT_EQ(st.code(), StatusCode::kInvalidArgument);
  EXPECT_NE(st.message().find("arity"), std::string::npos);
}

TEST(ValidateRow, KeyMismatch) {
  Schema s = SmallSchema();
  Row r = SmallRow(7, 1);
  r.cells[0] = std::int64_t{5};
  Status st = validate_row(s, r);
  EXPECT_NE(st.message().find("key mismatch"), std::string::npos);
  // pure: same answer twice
  EXPECT_EQ(validate_row(s, r).message(), st.message());
}

TEST(ValidateRow, TypeMismatch) {
  Row r = MakeRow(1, {std::string("no"), std::int64_t{0}, std::string("x")});
  EXPECT_FALSE(validate_row(SmallSchema(), r).ok());
}

TEST(Row, PayloadBytesOfBenchmarkRowIs4096) {
  std::vector<Cell> tail;
  for (int i = 1; i <= 30; ++i) {
    if (i <= 15) tail.emplace_back(std::int64_t{i});
    else tail.emplace_back(std::string(264, 'z'));
  }
  EXPECT_EQ(MakeRow(1, tail).payload_bytes(), 4096u);
}

TEST(KeyRange, HalfOpen) {
  KeyRange r = KeyRange::Of(0, 100);
  EXPECT_TRUE(r.contains(0));
  EXPECT_FALSE(r.contains(100));
  EXPECT_TRUE(KeyRange::All().contains(kMaxKey));
  EXPECT_TRUE(KeyRange::Of(5, 5).empty());
}

// ---- Bloom ----

TEST(Bloom, NoFalseNegatives) {
  auto b = BloomFilter::ForKeys(10000);
  std::mt19937_64 rng(1);
  std::vector<Key> keys;
  for (int i = 0; i < 10000; ++i) keys.push_back(static_cast<Key>(rng()));
  for (Key k : keys) b.add(k);
  for (Key k : keys) ASSERT_TRUE(b.may_contain(k));
}

TEST(Bloom, FalsePositiveRateAtDesignLoad) {
  auto b = BloomFilter::ForKeys(10000);
  for (Key k = 0; k < 10000; ++k) b.add(k);
  int fp = 0;
  for (Key k = 1000000; k < 1100000; ++k) fp += b.may_contain(k);
  EXPECT_LE(fp, 2000);  // 2% of 1e5
}

TEST(Bloom, BytesRoundTrip) {
  auto b = BloomFilter::ForKeys(100);
  for (Key k = 0; k < 100; ++k) b.add(k * 7);
  auto c = BloomFilter::FromBytes(b.num_bits(), b.num_hashes(), b.to_bytes());
  EXPECT_TRUE(b == c);
}

// ---- RowTable ----

RowTableOptions Opts(std::size_t cap = 64u << 20) {
  RowTableOptions o;
  o.capacity_bytes = cap;
  o.expected_row_bytes = 64;
  return o;
}

RowPtr P(Row r) { return std::make_shared<const Row>(std::move(r)); }

TEST(RowTable, ReadYourWrite) {
  RowTable t(1, Opts());
  EXPECT_EQ(t.put(P(SmallRow(5, 1)), Version{10}), WriteResult::kOk);
  auto g = t.get(5, Version{10});
  ASSERT_TRUE(g.found());
  EXPECT_EQ(g.row->int_at(1), 1);
  EXPECT_EQ(t.get(5, Version{9}).kind, RowLookup::Kind::kAbsent);
}

TEST(RowTable, FullAtCapacity) {
  // Each small row here is 8 + 8 + 8 + 8 + 1 = 33 bytes.
  const std::size_t rb = SmallRow(0, 0).payload_bytes();
  RowTable t(1, Opts(rb * 10));
  for (int i = 0; i < 9; ++i) ASSERT_EQ(t.put(P(SmallRow(i, 0)), Version{1u + i}), WriteResult::kOk);
  EXPECT_EQ(t.put(P(SmallRow(9, 0)), Version{10}), WriteResult::kFull);
  EXPECT_TRUE(t.get(9, Version{10}).found());  // admitted
  EXPECT_LE(t.size_bytes(), t.capacity_bytes() + rb);
}

TEST(RowTable, FrozenRejectsAndFreezeIsIdempotent) {
  RowTable t(1, Opts());
  ASSERT_EQ(t.put(P(SmallRow(1, 1)), Version{1}), WriteResult::kOk);
  t.freeze();
  t.freeze();
  EXPECT_TRUE(t.frozen());
  EXPECT_EQ(t.put(P(SmallRow(2, 1)), Version{2}), WriteResult::kRejectedFrozen);
  EXPECT_EQ(t.delete_mark(1, Version{3}), WriteResult::kRejectedFrozen);
  EXPECT_TRUE(t.get(1, Version{5}).found());
  EXPECT_FALSE(t.get(2, Version{5}).found());
}

TEST(RowTable, TombstoneShadowsByVersion) {
  RowTable t(1, Opts());
  ASSERT_EQ(t.put(P(SmallRow(4, 1)), Version{5}), WriteResult::kOk);
  ASSERT_EQ(t.delete_mark(4, Version{8}), WriteResult::kOk);
  EXPECT_EQ(t.get(4, Version{9}).kind, RowLookup::Kind::kTombstone);
  EXPECT_TRUE(t.get(4, Version{6}).found());
  ASSERT_EQ(t.dlist().size(), 1u);
  EXPECT_EQ(t.dlist()[0], std::make_pair(Key{4}, Version{8}));
  EXPECT_EQ(t.size_bytes(), SmallRow(4, 1).payload_bytes() + RowTable::kTombstoneBytes);
}

TEST(RowTable, TombstoneForUnknownKeyIsOk) {
  RowTable t(1, Opts());
  EXPECT_EQ(t.delete_mark(77, Version{1}), WriteResult::kOk);
  EXPECT_EQ(t.get(77, Version{1}).kind, RowLookup::Kind::kTombstone);
}

TEST(RowTable, VersionOrdering) {
  RowTable t(1, Opts());
  ASSERT_EQ(t.put(P(SmallRow(1, 100)), Version{3}), WriteResult::kOk);
  ASSERT_EQ(t.put(P(SmallRow(1, 200)), Version{7}), WriteResult::kOk);
  EXPECT_EQ(t.get(1, Version{5}).row->int_at(1), 100);
  EXPECT_EQ(t.get(1, Version{7}).row->int_at(1), 200);
  EXPECT_EQ(t.get(1, Version{2}).kind, RowLookup::Kind::kAbsent);
}

TEST(RowTable, BloomNegativeSkipsProbe) {
  RowTable t(1, Opts());
  for (Key k = 0; k < 100; ++k) ASSERT_EQ(t.put(P(SmallRow(k, 0)), Version{1u + k}), WriteResult::kOk);
  int negatives = 0;
  for (Key k = 1000; k < 2000; ++k) {
    if (!t.maybe_contains(k)) {
      ++negatives;
      EXPECT_EQ(t.get(k, Version::Max()).kind, RowLookup::Kind::kAbsent);
    }
  }
  EXPECT_GT(negatives, 900);
}

TEST(RowTable, ScanEmpty) {
  RowTable t(1, Opts());
  EXPECT_FALSE(t.scan(KeyRange::All(), Version::Max()).valid());
}

TEST(RowTable, ScanRangeHalfOpen) {
  RowTable t(1, Opts());
  for (Key k : {1, 2, 3}) ASSERT_EQ(t.put(P(SmallRow(k, 0)), Version{static_cast<std::uint64_t>(k)}), WriteResult::kOk);
  std::vector<Key> got;
  for (auto c = t.scan(KeyRange::Of(2, 3), Version::Max()); c.valid(); c.next()) got.push_back(c.entry().key);
  EXPECT_EQ(got, std::vector<Key>{2});
}

TEST(RowTable, ScanYieldsTombstoneAsResolvedEntry) {
  RowTable t(1, Opts());
  ASSERT_EQ(t.put(P(SmallRow(6, 0)), Version{3}), WriteResult::kOk);
  ASSERT_EQ(t.delete_mark(6, Version{9}), WriteResult::kOk);
  auto c = t.scan(KeyRange::All(), Version{10});
  ASSERT_TRUE(c.valid());
  EXPECT_EQ(c.entry().key, 6);
  EXPECT_TRUE(c.entry().is_tombstone());
  c.next();
  EXPECT_FALSE(c.valid());
  auto old = t.scan(KeyRange::All(), Version{5});
  ASSERT_TRUE(old.valid());
  EXPECT_FALSE(old.entry().is_tombstone());
}

TEST(RowTable, RandomizedOracle) {
  std::mt19937_64 rng(7);
  RowTable t(1, Opts());
  testing::VersionedOracle oracle;
  for (std::uint64_t v = 1; v <= 3000; ++v) {
    const Key k = static_cast<Key>(rng() % 200);
    if (rng() % 4 == 0) {
      ASSERT_NE(t.delete_mark(k, Version{v}), WriteResult::kRejectedFrozen);
      oracle.erase(k, Version{v});
    } else {
      Row r = testing::RandomSmallRow(k, rng);
      ASSERT_NE(t.put(P(r), Version{v}), WriteResult::kRejectedFrozen);
      oracle.put(r, Version{v});
    }
  }
  for (int probe = 0; probe < 50; ++probe) {
    const Version rv{rng() % 3100};
    for (Key k = 0; k < 200; ++k) {
      auto g = t.get(k, rv);
      auto o = oracle.get(k, rv);
      ASSERT_EQ(g.found(), o.has_value()) << "key " << k << " at " << rv.value;
      if (o) ASSERT_EQ(*g.row, *o);
    }
    // scan: strictly ascending, duplicate free, and resolved
    std::optional<Key> prev;
    std::vector<Row> live;
    for (auto c = t.scan(KeyRange::All(), rv); c.valid(); c.next()) {
      if (prev) ASSERT_LT(*prev, c.entry().key);
      prev = c.entry().key;
      if (!c.entry().is_tombstone()) live.push_back(*c.entry().payload);
    }
    EXPECT_EQ(live, oracle.scan(KeyRange::All(), rv));
  }
}

TEST(RowTable, ReadersSeeStableResultsAcrossFreeze) {
  RowTable t(1, Opts());
  for (Key k = 0; k < 1000; ++k) ASSERT_EQ(t.put(P(SmallRow(k, k)), Version{1u + k}), WriteResult::kOk);
  auto collect = [&] {
    std::vector<Key> ks;
    for (auto c = t.scan(KeyRange::All(), Version{500}); c.valid(); c.next()) ks.push_back(c.entry().key);
    return ks;
  };
  auto before = collect();
  std::thread freezer([&] { t.freeze(); });
  auto during = collect();
  freezer.join();
  EXPECT_EQ(before, during);
  EXPECT_EQ(before, collect());
  EXPECT_EQ(before.size(), 500u);
}

TEST(RowTable, WriteLogInVersionOrder) {
  RowTable t(1, Opts());
  ASSERT_EQ(t.put(P(SmallRow(3, 0)), Version{1}), WriteResult::kOk);
  ASSERT_EQ(t.delete_mark(1, Version{2}), WriteResult::kOk);
  ASSERT_EQ(t.put(P(SmallRow(2, 0)), Version{3}), WriteResult::kOk);
  ASSERT_EQ(t.write_log().size(), 3u);
  EXPECT_EQ(t.write_log()[1], std::make_pair(Key{1}, Version{2}));
  EXPECT_EQ(t.max_version(), Version{3});
}

}  // namespace
}  // namespace synchro
