#pragma once

#include <initializer_list>
#include <numeric>
#include <vector>

#include "cfnet/common.hpp"
#include "cfnet/rng.hpp"

namespace cfnet {

// Dense row-major tensor of arbitrary rank. The last axis is contiguous and
// fastest-varying; operations that need matrix structure view the tensor as
// [everything-else, last] or as a batch of [rows, cols] slices over the last
// two axes.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    for (const Index d : shape_) {
      detail::require(d > 0, detail::cat("tensor extents must be positive, got ",
                                         detail::shape_str(shape_)));
    }
    data_ = ArrayX<Scalar>::Zero(numel(shape_));
  }

  Tensor(std::vector<Index> shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape)) {
    detail::require(static_cast<Index>(values.size()) == size(),
                    detail::cat("initializer has ", values.size(), " values for shape ",
                                detail::shape_str(shape_)));
    Index i = 0;
    for (const Scalar v : values) data_[i++] = v;
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<Index> shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static Tensor scalar(Scalar v) { return full({1}, v); }

  static Tensor randn(std::vector<Index> shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) {
      t.data_[i] = static_cast<Scalar>(rng.normal(mean, stddev));
    }
    return t;
  }

  static Index numel(const std::vector<Index>& shape) {
    Index n = 1;
    for (const Index d : shape) n *= d;
    return n;
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_[static_cast<size_t>(i)]; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Index last_dim() const {
    detail::require(rank() >= 1, "tensor has no axes");
    return shape_.back();
  }

  // Product of every extent except the last.
  Index outer_size() const { return size() / last_dim(); }

  // Product of every extent except the last two.
  Index batch_count() const {
    detail::require(rank() >= 2, "need rank >= 2 for matrix views");
    return size() / (rows() * cols());
  }
  Index rows() const { return shape_[shape_.size() - 2]; }
  Index cols() const { return shape_.back(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Eigen::Map<ArrayX<Scalar>> arr() { return {data_.data(), data_.size()}; }
  Eigen::Map<const ArrayX<Scalar>> arr() const { return {data_.data(), data_.size()}; }

  // View as [outer_size, last_dim].
  MatMap<Scalar> as_matrix() { return {data_.data(), outer_size(), last_dim()}; }
  ConstMatMap<Scalar> as_matrix() const { return {data_.data(), outer_size(), last_dim()}; }

  // View of batch slice b over the last two axes.
  MatMap<Scalar> mat_at(Index b) {
    return {data_.data() + b * rows() * cols(), rows(), cols()};
  }
  ConstMatMap<Scalar> mat_at(Index b) const {
    return {data_.data() + b * rows() * cols(), rows(), cols()};
  }

  void set_zero() { data_.setZero(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Leading-axes shape with the last axis removed.
  std::vector<Index> outer_shape() const {
    std::vector<Index> s(shape_.begin(), shape_.end() - 1);
    if (s.empty()) s.push_back(1);
    return s;
  }

 private:
  std::vector<Index> shape_;
  ArrayX<Scalar> data_;
};

template <typename Scalar>
void check_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  detail::require(a.same_shape(b),
                  detail::cat(op, ": shape mismatch, expected ", detail::shape_str(a.shape()),
                              " got ", detail::shape_str(b.shape())));
}

}  // namespace cfnet
