#pragma once

// Definitions shared by the engine translation units.

#include "synchro/engine.hpp"

namespace synchro {

// One row emitted by a merged range read. Exactly one of row / segment is set.
struct Hit {
  Key key = 0;
  const Row* row = nullptr;
  const SegmentPtr* segment = nullptr;
  const ProjectedRead* pr = nullptr;
  std::uint32_t offset = 0;
  const std::vector<std::size_t>* projection = nullptr;

  // j indexes the projection.
  Cell cell(std::size_t j) const;
  std::int64_t int_at(std::size_t j) const;
  // Requires the full projection.
  Row materialize(const Schema& schema) const;
};

struct Engine::Table {
  std::string name;
  Schema schema;
  std::vector<CellType> types;
  std::unique_ptr<LayoutManager> mgr;
  CompactionMarkSet marks;
  // incremental_col: delta segment still absorbing small writes; held marked.
  SegmentPtr open;
};

struct Engine::Located {
  enum Kind { kNone, kTier, kSegment };
  Kind kind = kNone;
  RowPtr row;
  Occurrence occ;
};

}  // namespace synchro
