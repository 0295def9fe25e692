#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace noether {

/// Shape/domain violations on dense linear-algebra inputs.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by inverse() when elimination hits a pivot below the singularity
/// threshold; carries the offending pivot magnitude.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, double pivot_magnitude)
      : std::runtime_error(what), pivot(pivot_magnitude) {}
  double pivot;
};

/// Raised by integrate_adaptive() when the recursion depth budget runs out.
class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense real vector.
struct Vector {
  std::vector<double> data;

  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data(n, fill) {}
  Vector(std::initializer_list<double> xs) : data(xs) {}

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

/// Dense real matrix, row-major contiguous storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix diag(const Vector& d);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, const Vector& x);
Matrix transpose(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& a);

double trace(const Matrix& a);
Vector diagonal(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double norm(const Vector& v);
double dot(const Vector& a, const Vector& b);

/// Frobenius inner product <a, b> = sum_ij a_ij b_ij.
double frobenius_dot(const Matrix& a, const Matrix& b);

/// Inverse via LU with partial pivoting. Pivot magnitudes below
/// 1e-12 * max|a_ij| raise SingularMatrixError.
Matrix inverse(const Matrix& a);

/// Determinant via LU with partial pivoting (0 on early pivot collapse).
double det(const Matrix& a);

/// Ascending eigenvalues of a symmetric matrix; eigenvectors as columns.
struct EighResult {
  Vector eigenvalues;
  Matrix eigenvectors;
};

/// Cyclic Jacobi rotations until off-diagonal Frobenius mass drops below
/// 1e-12 * ||a||_F, or 60 sweeps.
EighResult eigh_jacobi(const Matrix& a);

/// Thin SVD a = u * diag(sigma) * v^T with sigma non-negative descending.
struct SvdResult {
  Matrix u;
  Vector sigma;
  Matrix v;
};

/// One-sided Jacobi SVD. Inputs with rows < cols are transposed internally.
SvdResult svd_jacobi(const Matrix& a);

/// Moore-Penrose pseudo-inverse with singular values below
/// rel_cutoff * sigma_max treated as zero.
Matrix pseudo_inverse(const Matrix& a, double rel_cutoff = 1e-10);

/// Operator (spectral) norm by power iteration on a^T a:
/// 50 iterations or relative change below 1e-10.
double operator_norm(const Matrix& a);

/// Orthonormal factor of a thin QR (Householder), diagonal of R fixed >= 0.
Matrix qr_orthonormal(const Matrix& a);

/// Adaptive Simpson quadrature to absolute tolerance tol; recursion depth
/// capped at 50, exhaustion raises QuadratureError. Handles lo > hi by sign.
double integrate_adaptive(const std::function<double(double)>& f, double lo,
                          double hi, double tol = 1e-10);

}  // namespace noether
