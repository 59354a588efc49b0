#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace ttlbp {

using Real = double;

// Dense row-major tensor of reals. Layer tensors are laid out [batch x features].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Real fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(std::vector<std::size_t> shape, std::vector<Real> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::vector<Real>& raw() noexcept { return data_; }
  const std::vector<Real>& raw() const noexcept { return data_; }

  // Contiguous slice along the leading dimension (one batch row).
  std::span<Real> row(std::size_t i);
  std::span<const Real> row(std::size_t i) const;
  std::size_t row_size() const;

  void fill(Real v);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  bool operator==(const Tensor& other) const = default;

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Largest elementwise relative difference. Entries whose magnitude falls below
// `floor_fraction` of the reference tensor's max-abs are compared against that
// floor instead, so cancellation noise around zero does not dominate.
Real max_relative_error(const Tensor& actual, const Tensor& reference,
                        Real floor_fraction = 1e-4);

struct RelativeError {
  Real value = 0.0;
  std::size_t index = 0;  // flat index of the worst element
};
RelativeError worst_relative_error(const Tensor& actual, const Tensor& reference,
                                   Real floor_fraction = 1e-4);

}  // namespace ttlbp
