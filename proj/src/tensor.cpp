#include "snf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "snf/errors.hpp"

namespace snf {

namespace {

std::size_t checked_extent_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) {
    throw DimensionError("tensor shape must have at least one extent");
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
    n *= e;
  }
  return n;
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  return fmt::format("[{}]", fmt::join(shape, "x"));
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(checked_extent_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_extent_product(shape_) != data_.size()) {
    throw DimensionError(fmt::format("tensor of shape {} cannot hold {} values",
                                     shape_string(shape_), data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, value); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_string(shape_));
  return shape_[1];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace snf
