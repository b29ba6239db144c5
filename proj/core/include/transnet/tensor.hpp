#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace transnet {

/// Batch, channel, height, width extents of a dense tensor.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  /// n*c*h*w; throws ShapeError if the product overflows size_t.
  std::size_t count() const;
  std::size_t per_sample() const { return c * h * w; }
  bool live() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

  std::string to_string() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Read-only row-major matrix view.
struct ConstMatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Mutable row-major matrix view.
struct MatrixView {
  std::span<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  operator ConstMatrixView() const { return {data, rows, cols}; }
};

// Dense float64 tensor in n->c->h->w row-major order. Matrices are tensors
// of shape (rows, cols, 1, 1); any tensor can be viewed as an (n, c*h*w)
// matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, double fill = 0.0);
  // Throws ShapeError unless values.size() == shape.count().
  Tensor(Shape4 shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }

  /// Values of sample n as a contiguous span of c*h*w elements.
  std::span<const double> sample(std::size_t n) const;
  std::span<double> sample(std::size_t n);

  ConstMatrixView as_matrix() const { return {data_, shape_.n, shape_.per_sample()}; }
  MatrixView as_matrix() { return {data_, shape_.n, shape_.per_sample()}; }

  std::vector<double> to_vector() const { return data_; }

  /// Same values under a new shape with equal element count.
  Tensor reshaped(Shape4 shape) const&;
  Tensor reshaped(Shape4 shape) &&;

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

/// Builds a tensor from either one broadcast value or exactly shape.count()
/// values. Throws ShapeError("expected N values, got M") otherwise.
Tensor make_tensor(Shape4 shape, std::span<const double> values);
Tensor make_tensor(Shape4 shape, std::initializer_list<double> values);

/// c = a * b. Throws ShapeError when a.cols != b.rows.
Tensor matmul(ConstMatrixView a, ConstMatrixView b);

/// Low-level products used by the dense and convolution kernels. All views
/// are row-major; `accumulate` adds into c instead of overwriting it.
void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate = false);
/// c (m x n) = a (m x k) * b^T where b is (n x k).
void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate = false);
/// c (m x n) = a^T * b where a is (k x m) and b is (k x n).
void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate = false);

}  // namespace transnet
