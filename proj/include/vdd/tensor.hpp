#pragma once

#include "vdd/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace vdd {

/// Dense row-major tensor: `values` holds product(shape) entries.
template <typename Scalar>
struct BasicTensor {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::vector<Eigen::Index> shape;
  Vector values;

  BasicTensor() = default;
  BasicTensor(std::vector<Eigen::Index> shape_, Vector values_)
      : shape(std::move(shape_)), values(std::move(values_)) {
    if (element_count(shape) != values.size())
      throw Error(Errc::ShapeMismatch, "tensor: shape does not match value count");
  }

  static BasicTensor zeros(std::vector<Eigen::Index> shape_) {
    const Eigen::Index n = element_count(shape_);
    return BasicTensor(std::move(shape_), Vector::Zero(n));
  }

  /// Single-channel (1, rows, cols) tensor from a matrix.
  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    RowMajorMatrix rm = m;
    return BasicTensor({1, rm.rows(), rm.cols()},
                       Eigen::Map<const Vector>(rm.data(), rm.size()));
  }

  /// Last two dimensions as a matrix (requires a single leading channel).
  RowMajorMatrix as_matrix() const {
    if (shape.size() != 3 || shape[0] != 1)
      throw Error(Errc::ShapeMismatch, "tensor: as_matrix needs shape (1, rows, cols)");
    return Eigen::Map<const RowMajorMatrix>(values.data(), shape[1], shape[2]);
  }

  Eigen::Index size() const { return values.size(); }
  bool all_finite() const { return values.allFinite(); }

  static Eigen::Index element_count(const std::vector<Eigen::Index>& s) {
    return std::accumulate(s.begin(), s.end(), Eigen::Index{1}, std::multiplies<>());
  }
};

using Tensor = BasicTensor<double>;

inline std::string shape_string(const std::vector<Eigen::Index>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + ")";
}

}  // namespace vdd
