// Dense n-d tensor value type. Storage is row-major, shared between copies
// (cheap value semantics for tape bookkeeping); the tape node handle marks
// tensors participating in gradient recording.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "meshtex/common.hpp"

namespace meshtex {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

template <typename S>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<S>> data;
  int node = -1;  // tape node handle, -1 = constant

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.data = std::make_shared<std::vector<S>>(shape_numel(shape), S(0));
    t.shape = std::move(shape);
    return t;
  }

  static Tensor full(Shape shape, S value) {
    Tensor t;
    t.data = std::make_shared<std::vector<S>>(shape_numel(shape), value);
    t.shape = std::move(shape);
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values) {
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.data = std::make_shared<std::vector<S>>(std::move(values));
    t.shape = std::move(shape);
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  std::size_t size() const { return data ? data->size() : 0; }
  S* ptr() { return data->data(); }
  const S* ptr() const { return data->data(); }
  S& operator[](std::size_t i) { return (*data)[i]; }
  const S& operator[](std::size_t i) const { return (*data)[i]; }

  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  // 2-d accessors.
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  S& at(int r, int c) { return (*data)[static_cast<std::size_t>(r) * cols() + c]; }
  const S& at(int r, int c) const {
    return (*data)[static_cast<std::size_t>(r) * cols() + c];
  }

  S item() const {
    if (size() != 1) {
      throw ShapeError("item() on non-scalar tensor " + shape_str(shape));
    }
    return (*data)[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const S& v : *data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  // Deep copy with no tape association.
  Tensor detached_copy() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<S>>(*data);
    return t;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(size());
    for (std::size_t i = 0; i < size(); ++i) {
      (*t.data)[i] = static_cast<T>((*data)[i]);
    }
    return t;
  }
};

// Eigen views over the flat storage (row-major).
template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<MatRM<S>> mat_view(Tensor<S>& t, int rows, int cols) {
  return {t.ptr(), rows, cols};
}

template <typename S>
Eigen::Map<const MatRM<S>> mat_view(const Tensor<S>& t, int rows, int cols) {
  return {t.ptr(), rows, cols};
}

}  // namespace meshtex
