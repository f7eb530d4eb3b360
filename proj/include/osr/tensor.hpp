#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "osr/error.hpp"

namespace osr {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense multi-dimensional array, row-major flat storage.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until populated; same length as data when set

  Tensor() = default;

  Tensor(Shape s, std::vector<T> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    check_shape();
  }

  static Tensor zeros(Shape s, bool rg = false) {
    auto n = static_cast<size_t>(numel(s));
    return Tensor(std::move(s), std::vector<T>(n, T(0)), rg);
  }

  static Tensor full(Shape s, T v, bool rg = false) {
    auto n = static_cast<size_t>(numel(s));
    return Tensor(std::move(s), std::vector<T>(n, v), rg);
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  // 2-D accessors; the graph primitives validate ranks before using these.
  T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

private:
  void check_shape() const {
    for (int d : shape) {
      if (d <= 0) throw ShapeError("Tensor: dimension sizes must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    }
  }
};

template <class T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<MatrixRM<T>> matrix_view(std::vector<T>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<MatrixRM<T>>(v.data(), rows, cols);
}

template <class T>
Eigen::Map<const MatrixRM<T>> matrix_view(const std::vector<T>& v, Eigen::Index rows,
                                          Eigen::Index cols) {
  return Eigen::Map<const MatrixRM<T>>(v.data(), rows, cols);
}

template <class T>
Eigen::Map<MatrixRM<T>> matrix_view(Tensor<T>& t) {
  return matrix_view(t.data, t.shape[0], t.shape[1]);
}

template <class T>
Eigen::Map<const MatrixRM<T>> matrix_view(const Tensor<T>& t) {
  return matrix_view(t.data, t.shape[0], t.shape[1]);
}

template <class T>
bool all_finite(const std::vector<T>& v) {
  return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(v.data(),
                                                               static_cast<Eigen::Index>(v.size()))
      .allFinite();
}

}  // namespace osr
