// av2vec/tensor.hpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AV2VEC_TENSOR_HPP_
#define AV2VEC_TENSOR_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "av2vec/errors.hpp"
#include "av2vec/rng.hpp"

namespace av2vec {

// Dense row-major tensor, rank 1..4 in practice. Time-major sequences are
// [T, D], video clips are [T, H, W, C], scalars are shape {1}.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw ShapeError("negative dimension in tensor shape");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(T v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static Tensor randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  T& at(int r, int c) {
    return data[static_cast<size_t>(r) * shape[1] + c];
  }
  const T& at(int r, int c) const {
    return data[static_cast<size_t>(r) * shape[1] + c];
  }

  // [T, H, W, C] access.
  T& at4(int t, int h, int w, int c) {
    return data[((static_cast<size_t>(t) * shape[1] + h) * shape[2] + w) *
                    shape[3] +
                c];
  }
  const T& at4(int t, int h, int w, int c) const {
    return data[((static_cast<size_t>(t) * shape[1] + h) * shape[2] + w) *
                    shape[3] +
                c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& x : data) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i)
      os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
using EigenRowMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 2-D views over the flat storage; rank > 2 collapses the leading dims.
template <typename T>
Eigen::Map<EigenRowMat<T>> as_matrix(Tensor<T>& t) {
  const int c = t.shape.back();
  const int r = static_cast<int>(t.numel() / c);
  return Eigen::Map<EigenRowMat<T>>(t.data.data(), r, c);
}

template <typename T>
Eigen::Map<const EigenRowMat<T>> as_matrix(const Tensor<T>& t) {
  const int c = t.shape.back();
  const int r = static_cast<int>(t.numel() / c);
  return Eigen::Map<const EigenRowMat<T>>(t.data.data(), r, c);
}

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int>& s,
                   const char* what) {
  if (t.shape != s) {
    Tensor<T> want;
    want.shape = s;
    throw ShapeError(std::string(what) + ": expected " + want.shape_str() +
                     ", got " + t.shape_str());
  }
}

// dst += src, shapes must match.
template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src))
    throw ShapeError("axpy: shape mismatch " + dst.shape_str() + " vs " +
                     src.shape_str());
  for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace av2vec

#endif  // AV2VEC_TENSOR_HPP_
