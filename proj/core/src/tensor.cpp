#include "transnet/tensor.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "transnet/error.hpp"

namespace transnet {

namespace {

std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    throw ShapeError("tensor element count overflows size_t");
  }
  return a * b;
}

}  // namespace

std::size_t Shape4::count() const { return checked_mul(checked_mul(checked_mul(n, c), h), w); }

std::string Shape4::to_string() const { return fmt::format("({},{},{},{})", n, c, h, w); }

Tensor::Tensor(Shape4 shape, double fill) : shape_(shape), data_(shape.count(), fill) {}

Tensor::Tensor(Shape4 shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.count()) {
    throw ShapeError(fmt::format("expected {} values, got {}", shape_.count(), data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor(Shape4{rows, cols, 1, 1}, fill);
}

std::span<const double> Tensor::sample(std::size_t n) const {
  const auto per = shape_.per_sample();
  return std::span<const double>(data_).subspan(n * per, per);
}

std::span<double> Tensor::sample(std::size_t n) {
  const auto per = shape_.per_sample();
  return std::span<double>(data_).subspan(n * per, per);
}

Tensor Tensor::reshaped(Shape4 shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(shape);
}

Tensor Tensor::reshaped(Shape4 shape) && {
  if (shape.count() != data_.size()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_.to_string(), shape.to_string()));
  }
  shape_ = shape;
  return std::move(*this);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor make_tensor(Shape4 shape, std::span<const double> values) {
  const auto count = shape.count();
  if (values.size() == 1) return Tensor(shape, values[0]);
  if (values.size() != count) {
    throw ShapeError(fmt::format("expected {} values, got {}", count, values.size()));
  }
  return Tensor(shape, std::vector<double>(values.begin(), values.end()));
}

Tensor make_tensor(Shape4 shape, std::initializer_list<double> values) {
  return make_tensor(shape, std::span<const double>(values.begin(), values.size()));
}

Tensor matmul(ConstMatrixView a, ConstMatrixView b) {
  if (a.cols != b.rows) {
    throw ShapeError(fmt::format("matmul: ({}x{}) * ({}x{}) inner dimensions differ", a.rows,
                                 a.cols, b.rows, b.cols));
  }
  Tensor c = Tensor::matrix(a.rows, b.cols);
  gemm_nn(a, b, c.as_matrix());
  return c;
}

}  // namespace transnet
