#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "noiselab/common.hpp"

namespace noiselab {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

/// Dense n-dimensional array with row-major flat storage.
///
/// The single numeric carrier for activations, weights and gradients. The
/// float instantiation is the production type; the double instantiation backs
/// the finite-difference oracles.
template <typename Scalar>
struct TensorT {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Shape shape;
  Array data;

  TensorT() = default;
  TensorT(Shape s, Array d) : shape(std::move(s)), data(std::move(d)) {
    check(shape_numel(shape) == data.size(), "tensor shape ", shape_str(shape),
          " does not match storage size ", data.size());
  }

  static TensorT zeros(Shape s) {
    const Index n = shape_numel(s);
    return TensorT(std::move(s), Array::Zero(n));
  }
  static TensorT full(Shape s, Scalar v) {
    const Index n = shape_numel(s);
    return TensorT(std::move(s), Array::Constant(n, v));
  }
  static TensorT from(Shape s, std::initializer_list<Scalar> vals) {
    Array d(static_cast<Index>(vals.size()));
    Index i = 0;
    for (Scalar v : vals) d[i++] = v;
    return TensorT(std::move(s), std::move(d));
  }

  Index numel() const { return data.size(); }
  Index dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  Scalar& operator[](Index i) { return data[i]; }
  Scalar operator[](Index i) const { return data[i]; }

  /// Same storage, new shape (element count must match).
  TensorT reshaped(Shape s) const {
    check(shape_numel(s) == numel(), "reshape ", shape_str(shape), " -> ", shape_str(s),
          " changes element count");
    return TensorT(std::move(s), data);
  }

  /// View the flat storage as a rows x cols row-major matrix.
  Eigen::Map<Matrix> mat(Index rows, Index cols) {
    check(rows * cols == numel(), "matrix view ", rows, "x", cols, " on ", numel(), " elements");
    return Eigen::Map<Matrix>(data.data(), rows, cols);
  }
  Eigen::Map<const Matrix> mat(Index rows, Index cols) const {
    check(rows * cols == numel(), "matrix view ", rows, "x", cols, " on ", numel(), " elements");
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
  }

  bool all_finite() const { return data.isFinite().all(); }

  template <typename Other>
  TensorT<Other> cast() const {
    TensorT<Other> out;
    out.shape = shape;
    out.data = data.template cast<Other>();
    return out;
  }
};

using Tensor = TensorT<float>;

}  // namespace noiselab
