#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ictxot {

/// Thrown when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Used for every array in the project:
/// sample sets (rows = points), model weights, and intermediate values.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diag(std::span<const double> values);
  static Matrix column(std::span<const double> values);
  static Matrix row(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// General product a·b. Dimension mismatch throws DimensionError.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);

double trace(const Matrix& a);
double frob_norm(const Matrix& a);
double frob_sq(const Matrix& a);
double max_abs(const Matrix& a);

/// Second-moment matrix (1/rows)·XᵀX of a sample set.
Matrix second_moment(const Matrix& samples);

/// 2×2 rotation by angle (radians).
Matrix rotation2d(double angle);

/// Dense symmetric matrix. Symmetry is exact: construction either checks it
/// or symmetrizes with (A+Aᵀ)/2.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Throws std::invalid_argument unless `a` is square, finite, and exactly symmetric.
  explicit SymMatrix(Matrix a);

  /// (a + aᵀ)/2, with the mirrored entries written from one computation so
  /// entries[i][j] == entries[j][i] bit-for-bit.
  static SymMatrix symmetrize(const Matrix& a);
  static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
  static SymMatrix diag(std::span<const double> values) { return SymMatrix(Matrix::diag(values)); }

  std::size_t dim() const { return m_.rows(); }
  double operator()(std::size_t r, std::size_t c) const { return m_(r, c); }
  const Matrix& matrix() const { return m_; }
  operator const Matrix&() const { return m_; }

 private:
  struct Unchecked {};
  SymMatrix(Matrix a, Unchecked) : m_(std::move(a)) {}
  Matrix m_;
};

struct EigenDecomp {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j pairs with values[j]
  int sweeps = 0;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, int sweeps)
      : std::runtime_error(what), sweeps_(sweeps) {}
  int sweeps() const { return sweeps_; }

 private:
  int sweeps_;
};

class NotPsdError : public std::domain_error {
 public:
  NotPsdError(const std::string& what, double eigenvalue)
      : std::domain_error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const { return eigenvalue_; }

 private:
  double eigenvalue_;
};

struct JacobiOptions {
  double rel_tol = 1e-12;
  int max_sweeps = 100;
};

/// Cyclic Jacobi eigendecomposition. Eigenvalues ascending, ties keep the
/// original column order.
EigenDecomp sym_eig(const SymMatrix& a, JacobiOptions opts = {});

/// Principal square root of a PSD matrix. Eigenvalues in [-1e-10, 0) are
/// clamped to zero; anything more negative throws NotPsdError.
SymMatrix sqrtm_psd(const SymMatrix& a);

/// V·diag(f(λ))·Vᵀ, symmetrized.
SymMatrix reconstruct(const EigenDecomp& e, std::span<const double> values);

double op_norm(const SymMatrix& a);
double frob_norm(const SymMatrix& a);

/// Largest singular value of a general matrix, via the eigenvalues of AᵀA.
double spectral_norm(const Matrix& a);

bool is_orthogonal(const Matrix& a, double tol = 1e-10);

}  // namespace ictxot
