#pragma once

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "wsk/error.hpp"

namespace wsk {

// Dense row-major tensor of 64-bit floats, rank 1..4. Conv filters use
// (filters, channels, height, width); feature maps use (channels, H, W).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(count(), 0.0);
  }

  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_shape();
    require(t.count() == data.size(), ErrorCode::shape_mismatch,
            "tensor data length " + std::to_string(data.size()) +
                " does not match shape product " + std::to_string(t.count()));
    t.data_ = std::move(data);
    return t;
  }

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::size_t i) { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(std::size_t i) const { return data_[i]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t e : shape_) n *= e;
    return shape_.empty() ? 0 : n;
  }

  void validate_shape() const {
    require(!shape_.empty() && shape_.size() <= 4, ErrorCode::shape_mismatch,
            "tensor rank must be 1..4, got " + std::to_string(shape_.size()));
    for (std::size_t e : shape_)
      require(e >= 1, ErrorCode::shape_mismatch, "tensor extents must be >= 1");
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Bit-pattern equality, stricter than operator== (distinguishes -0.0 from 0.0).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace wsk
