#include "ttlbp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ttlbp/error.hpp"

namespace ttlbp {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != count(shape_)) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

std::size_t Tensor::row_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

std::span<Real> Tensor::row(std::size_t i) {
  const std::size_t n = row_size();
  return std::span<Real>(data_).subspan(i * n, n);
}

std::span<const Real> Tensor::row(std::size_t i) const {
  const std::size_t n = row_size();
  return std::span<const Real>(data_).subspan(i * n, n);
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

RelativeError worst_relative_error(const Tensor& actual, const Tensor& reference,
                                   Real floor_fraction) {
  if (!actual.same_shape(reference)) {
    throw ShapeError("cannot compare tensors of shape " +
                     shape_to_string(actual.shape()) + " and " +
                     shape_to_string(reference.shape()));
  }
  Real ref_max = 0.0;
  for (Real v : reference.values()) ref_max = std::max(ref_max, std::abs(v));
  const Real floor = ref_max * floor_fraction;
  RelativeError worst;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const Real a = actual[i];
    const Real b = reference[i];
    if (a == b) continue;
    const Real denom = std::max({std::abs(a), std::abs(b), floor});
    const Real e = std::abs(a - b) / denom;
    if (std::isnan(e)) return {std::numeric_limits<Real>::infinity(), i};
    if (e > worst.value) worst = {e, i};
  }
  return worst;
}

Real max_relative_error(const Tensor& actual, const Tensor& reference,
                        Real floor_fraction) {
  return worst_relative_error(actual, reference, floor_fraction).value;
}

}  // namespace ttlbp
