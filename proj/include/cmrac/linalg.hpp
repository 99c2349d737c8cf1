#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "cmrac/errors.hpp"

namespace cmrac {

// Tolerances used by the dense kernels. Fixed project-wide; tests pin them.
inline constexpr double kLyapunovResidualTol = 1e-9;   // relative to ||Q||_F
inline constexpr double kRankCutoff = 1e-10;           // smallest admissible sigma_min
inline constexpr double kSymmetryTol = 1e-12;          // relative asymmetry bound
inline constexpr double kJacobiOffDiagTol = 1e-12;     // off-diagonal Frobenius target
inline constexpr double kPivotTol = 1e-13;             // relative LU pivot threshold

// Dense row-major matrix of doubles. Sizes in this project are tiny (n <= 8
// for plants, n^2 <= 64 for the vectorized Lyapunov system), so no attempt is
// made at blocking or expression templates; clarity wins.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix zero(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }
  static Matrix column(const std::vector<double>& entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Matrix transpose() const;
  Matrix operator+(const Matrix& rhs) const;
  Matrix operator-(const Matrix& rhs) const;
  Matrix operator*(const Matrix& rhs) const;
  Matrix operator*(double s) const;
  Matrix& operator+=(const Matrix& rhs);
  Matrix& operator-=(const Matrix& rhs);
  Matrix& operator*=(double s);
  bool operator==(const Matrix& rhs) const;

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

inline Matrix operator*(double s, const Matrix& m) { return m * s; }

double frobenius_norm(const Matrix& m);
bool all_finite(const Matrix& m);
// Throws NonFiniteValue naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

// Column-vector helpers (n x 1 matrices).
double dot(const Matrix& a, const Matrix& b);
double norm2(const Matrix& v);

// Relative asymmetry ||M - M^T||_F <= kSymmetryTol * max(1, ||M||_F).
bool is_symmetric(const Matrix& m);

// Solves A X = B by LU factorization with partial pivoting. A is square.
// Throws SingularSystem when a pivot falls below kPivotTol * max|A|.
Matrix lu_solve(const Matrix& a, const Matrix& b);

// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations
// iterated until the off-diagonal Frobenius norm falls below
// kJacobiOffDiagTol * max(1, ||M||_F). Throws NotSymmetric on asymmetric input.
std::vector<double> jacobi_eigenvalues(const Matrix& m);

double lambda_min(const Matrix& symmetric);
double lambda_max(const Matrix& symmetric);

// Solves A_r^T P + P A_r = -Q for symmetric positive definite P by
// vectorization: (I (x) A_r^T + A_r^T (x) I) vec(P) = -vec(Q), dense LU.
// Requires Q symmetric positive definite. Throws SingularSystem when the
// linear system is singular or the solution fails positive definiteness
// (i.e. A_r is not Hurwitz), NotSymmetric / NotPositiveDefinite for bad Q.
Matrix solve_lyapunov(const Matrix& a_r, const Matrix& q);

// Left pseudo-inverse (B^T B)^{-1} B^T of a full-column-rank B.
// Throws RankDeficient when sigma_min(B) <= kRankCutoff.
Matrix left_pseudo_inverse(const Matrix& b);

// Spectral norm (largest singular value) of a general rectangular matrix,
// computed from the symmetric eigenproblem of M^T M.
double spectral_norm(const Matrix& m);

// Smallest singular value, from lambda_min(M^T M).
double sigma_min(const Matrix& m);

// Lyapunov criterion: A is Hurwitz iff A^T P + P A = -I admits an SPD P.
bool is_hurwitz(const Matrix& a);

// Constants derived from (P, Q, B) that the controller and the feasibility
// checks share. eta = lambda_min(Q) / (2 lambda_max(P) ||B||).
struct SpectralConstants {
  double lambda_min_P = 0.0;
  double lambda_max_P = 0.0;
  double lambda_min_Q = 0.0;
  double norm_B = 0.0;         // largest singular value of B
  double norm_B_dagger = 0.0;  // 1 / sigma_min(B)
  double eta = 0.0;
  double sqrt_lambda_min_P = 0.0;
};

// Validates P, Q symmetric positive definite and B full column rank.
SpectralConstants spectral_constants(const Matrix& p, const Matrix& q, const Matrix& b);

}  // namespace cmrac
