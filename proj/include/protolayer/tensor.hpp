#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace protolayer {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles with value semantics.
///
/// Images are stored with shape {rows, cols, channels}: the channel index runs
/// fastest, then the column, then the row. Matrices are rank-2 tensors whose
/// rows are contiguous.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  // Sub-block i along the leading axis. For a matrix this is row i.
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape);

// Sequential left-to-right sums; results are reproducible for a given build.
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

/// y = M x for a rank-2 M.
std::vector<double> matvec(const Tensor& m, std::span<const double> x);
/// y = M^T x for a rank-2 M.
std::vector<double> matvec_transposed(const Tensor& m, std::span<const double> x);
/// A B^T, both rank-2 with equal column counts.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

// a += s * b
void axpy(double s, std::span<const double> b, std::span<double> a);

// Largest per-component |a-b| / max(|a|, |b|, floor).
double max_abs_relative_difference(std::span<const double> a, std::span<const double> b,
                                   double floor = 1e-300);
// max|a-b| / max(max|b|, floor): error relative to the magnitude of the reference vector.
double normwise_relative_error(std::span<const double> a, std::span<const double> reference,
                               double floor = 1e-300);

}  // namespace protolayer
