#include "mmamba/condition.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mmamba {

ConditionTable ConditionTable::make(const Init& init, Index classes, Index dim) {
  if (classes < 1 || dim < 1) throw std::invalid_argument("condition table needs classes and dim >= 1");
  const Index rows = classes + 1;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  Tensor table = randn({rows, dim}, init.rng(), stddev);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      table.mutable_values().data(), rows, dim);
  std::normal_distribution<double> normal(0.0, stddev);
  auto collides = [&m](Index i) {
    for (Index j = 0; j < i; ++j) {
      if ((m.row(i) - m.row(j)).norm() < 1e-6) return true;
    }
    return false;
  };
  for (Index i = 1; i < rows; ++i) {
    while (collides(i)) {
      for (Index k = 0; k < dim; ++k) m(i, k) = normal(init.rng());
    }
  }
  ConditionTable c;
  c.table = init.custom("cond_table", table, false);
  c.classes = classes;
  return c;
}

Tensor ConditionTable::operator()(std::span<const int> ids) const {
  std::vector<int> rows(ids.begin(), ids.end());
  for (int& r : rows) {
    if (r == kNull) {
      r = static_cast<int>(classes);
    } else if (r < 0 || r >= classes) {
      throw std::out_of_range("unknown condition class " + std::to_string(r));
    }
  }
  return index_rows(table, rows);
}

}  // namespace mmamba
