#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "vistr/errors.hpp"

namespace vistr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense order-N real tensor, row-major layout (last index fastest).
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> dims);
  DenseTensor(std::vector<std::size_t> dims, std::vector<double> data);

  static DenseTensor from_matrix(const Matrix& m);
  static DenseTensor from_vector(const Vector& v);

  std::size_t order() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t n) const { return dims_.at(n); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  /// Linear offset of a multi-index (row-major, last index fastest).
  std::size_t offset(const std::vector<std::size_t>& idx) const;
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    return offset(std::vector<std::size_t>(idx));
  }

  bool same_shape(const DenseTensor& other) const { return dims_ == other.dims_; }

  /// Order-2 view as an Eigen matrix (copies).
  Matrix as_matrix() const;
  Vector as_eigen_vector() const;

  void set_zero();

  bool operator==(const DenseTensor& other) const {
    return dims_ == other.dims_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

/// Mode-n unfolding: rows are mode-n fibres laid out as columns of the result.
/// Column order: remaining modes cycle with the lowest-numbered remaining mode
/// varying fastest. Modes are 0-based.
Matrix mode_unfold(const DenseTensor& x, std::size_t n);

/// Inverse of mode_unfold for the given target dims.
DenseTensor mode_fold(const Matrix& m, std::size_t n, const std::vector<std::size_t>& dims);

/// Tensor-times-matrix along mode n: u is J_n x I_n.
DenseTensor mode_mul(const DenseTensor& x, const Matrix& u, std::size_t n);

/// Tensor-times-vector along mode n; the mode is contracted away (order N-1).
DenseTensor vec_mul(const DenseTensor& x, const Vector& y, std::size_t n);

double inner(const DenseTensor& x, const DenseTensor& y);
double frobenius(const DenseTensor& x);

/// Binary ".ten" file: magic "VTEN", u32 LE version=1, u32 order,
/// u32 extents[order], float64 LE data row-major.
void write_ten(const std::string& path, const DenseTensor& x);
DenseTensor read_ten(const std::string& path);

void write_ten_matrix(const std::string& path, const Matrix& m);
Matrix read_ten_matrix(const std::string& path);
void write_ten_vector(const std::string& path, const Vector& v);
Vector read_ten_vector(const std::string& path);

}  // namespace vistr
