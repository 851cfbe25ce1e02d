/* Copyright 2026 The PoseWarp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef POSEWARP_TENSOR_HPP
#define POSEWARP_TENSOR_HPP

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "posewarp/common.hpp"

namespace posewarp {

// Dense row-major N-d array over a flat Eigen buffer. Feature maps use NCHW.
// Rank is at most 4; most shape arithmetic is explicit and checked.
template <typename T>
class TensorT {
 public:
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = Storage::Zero(numel_of(shape_));
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static TensorT ones(std::vector<int> shape) { return full(std::move(shape), T(1)); }

  static TensorT from_flat(std::vector<int> shape, Storage flat) {
    TensorT t;
    t.shape_ = std::move(shape);
    check(flat.size() == numel_of(t.shape_), "Tensor::from_flat: size mismatch");
    t.data_ = std::move(flat);
    return t;
  }

  static TensorT random_normal(std::vector<int> shape, Rng& rng, T stddev = T(1)) {
    TensorT t(std::move(shape));
    for (Eigen::Index i = 0; i < t.data_.size(); ++i)
      t.data_[i] = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static TensorT random_uniform(std::vector<int> shape, Rng& rng, T lo, T hi) {
    TensorT t(std::move(shape));
    for (Eigen::Index i = 0; i < t.data_.size(); ++i)
      t.data_[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Eigen::Index numel() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& flat() { return data_; }
  const Storage& flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](Eigen::Index i) { return data_[i]; }
  T operator[](Eigen::Index i) const { return data_[i]; }

  // NCHW addressing.
  T& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  // CHW addressing for rank-3 tensors.
  T& at(int c, int y, int x) { return data_[offset3(c, y, x)]; }
  T at(int c, int y, int x) const { return data_[offset3(c, y, x)]; }

  // [N,K] addressing for rank-2 tensors.
  T& at(int n, int k) { return data_[static_cast<Eigen::Index>(n) * dim(1) + k]; }
  T at(int n, int k) const { return data_[static_cast<Eigen::Index>(n) * dim(1) + k]; }

  TensorT reshaped(std::vector<int> shape) const {
    check(numel_of(shape) == numel(), "Tensor::reshaped: element count mismatch");
    TensorT t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  bool all_finite() const { return data_.isFinite().all(); }

  T max_abs() const { return data_.size() == 0 ? T(0) : data_.abs().maxCoeff(); }

  static Eigen::Index numel_of(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      check(d >= 0, "Tensor: negative dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

 private:
  Eigen::Index offset(int n, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(n) * dim(1) + c) * dim(2) + y) * dim(3) + x;
  }
  Eigen::Index offset3(int c, int y, int x) const {
    return (static_cast<Eigen::Index>(c) * dim(1) + y) * dim(2) + x;
  }

  std::vector<int> shape_;
  Storage data_;
};

using Tensor = TensorT<double>;

// Column-major 2-d planes used by the coordinate geometry; indexed (row, col).
using GridD = Eigen::ArrayXXd;
using GridI = Eigen::ArrayXXi;

// Stacks [C] planes of equal size into a [C,H,W] tensor.
Tensor tensor_from_planes(const std::vector<const GridD*>& planes);
// Extracts channel c of sample n as a plane.
GridD plane_from_tensor(const Tensor& t, int n, int c);
// Wraps a [C,H,W] tensor as [1,C,H,W].
Tensor with_batch_dim(const Tensor& chw);
// Drops the leading batch dim of a [1,C,H,W] tensor.
Tensor without_batch_dim(const Tensor& nchw);

}  // namespace posewarp

#endif  // POSEWARP_TENSOR_HPP
