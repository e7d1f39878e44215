#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fscl {

// Dense row-major matrix of doubles. Rows are examples throughout the
// codebase; no view machinery, just enough for small MLP math.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

}  // namespace fscl
