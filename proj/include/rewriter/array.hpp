#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rewriter/error.hpp"

namespace rewriter {

// Row-major dense 2-d array of doubles. Vectors are 1 x n rows. Everything
// the model needs fits in two axes, so there is no general nd machinery.
struct DenseArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  DenseArray() = default;
  DenseArray(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  DenseArray(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), v(std::move(values)) {
    if (v.size() != r * c)
      throw DimensionError("DenseArray", shape_str(), std::to_string(v.size()) + " values");
  }

  static DenseArray row(std::vector<double> values) {
    std::size_t n = values.size();
    return DenseArray(1, n, std::move(values));
  }

  std::size_t size() const { return v.size(); }
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void check_finite(const std::string& name) const {
    if (!all_finite()) throw TrainingError("non-finite values in " + name);
  }

  bool operator==(const DenseArray& o) const {
    return rows == o.rows && cols == o.cols && v == o.v;
  }
};

}  // namespace rewriter
