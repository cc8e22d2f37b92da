#pragma once

#include <cstddef>
#include <vector>

namespace ambidist {

// Dense row-major matrix of doubles. Used both for feature sequences (L x d)
// and for model parameters.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool operator==(const Matrix& other) const = default;
};

}  // namespace ambidist
