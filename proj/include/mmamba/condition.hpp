#pragma once

#include "mmamba/layers.hpp"

#include <span>

namespace mmamba {

/// Learned class embeddings plus one null row for classifier-free training.
struct ConditionTable {
  static constexpr int kNull = -1;

  Tensor table;  // [classes + 1, dim], last row is the null vector
  Index classes = 0;

  /// Rows are drawn from N(0, 1/dim) and redrawn until pairwise distinct.
  static ConditionTable make(const Init& init, Index classes, Index dim);
  Index dim() const { return table.dim(1); }
  /// ids in [0, classes) or kNull -> [ids.size(), dim].
  Tensor operator()(std::span<const int> ids) const;
};

}  // namespace mmamba
