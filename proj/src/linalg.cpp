#include "cmrac/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cmrac {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
}

void require_square(const Matrix& m, const char* op) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionMismatch(std::string(op) + ": expected nonempty square matrix, got " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

double max_abs(const Matrix& m) {
  double v = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) v = std::max(v, std::abs(m(i, j)));
  return v;
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) throw DimensionMismatch("Matrix init: ragged rows");
    data_.insert(data_.end(), row.begin(), row.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(const std::vector<double>& entries) {
  Matrix m(entries.size(), 1);
  for (std::size_t i = 0; i < entries.size(); ++i) m(i, 0) = entries[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::operator+(const Matrix& rhs) const {
  require_same_shape(*this, rhs, "operator+");
  Matrix out = *this;
  out += rhs;
  return out;
}

Matrix Matrix::operator-(const Matrix& rhs) const {
  require_same_shape(*this, rhs, "operator-");
  Matrix out = *this;
  out -= rhs;
  return out;
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
  require_same_shape(*this, rhs, "operator+=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += rhs.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
  require_same_shape(*this, rhs, "operator-=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= rhs.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix Matrix::operator*(double s) const {
  Matrix out = *this;
  out *= s;
  return out;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) {
    throw DimensionMismatch("operator*: inner dimensions " + std::to_string(cols_) + " vs " +
                            std::to_string(rhs.rows_));
  }
  Matrix out(rows_, rhs.cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t k = 0; k < cols_; ++k) {
      const double aik = (*this)(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < rhs.cols_; ++j) out(i, j) += aik * rhs(k, j);
    }
  }
  return out;
}

bool Matrix::operator==(const Matrix& rhs) const {
  return rows_ == rhs.rows_ && cols_ == rhs.cols_ && data_ == rhs.data_;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

bool all_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j))) return false;
  return true;
}

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) throw NonFiniteValue(std::string(what) + ": non-finite entry");
}

double dot(const Matrix& a, const Matrix& b) {
  if (a.cols() != 1 || b.cols() != 1 || a.rows() != b.rows())
    throw DimensionMismatch("dot: expects equal-length column vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, 0) * b(i, 0);
  return s;
}

double norm2(const Matrix& v) {
  if (v.cols() != 1) throw DimensionMismatch("norm2: expects a column vector");
  return frobenius_norm(v);
}

bool is_symmetric(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  double asym = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      const double d = m(i, j) - m(j, i);
      asym += 2.0 * d * d;
    }
  return std::sqrt(asym) <= kSymmetryTol * std::max(1.0, frobenius_norm(m));
}

Matrix lu_solve(const Matrix& a, const Matrix& b) {
  require_square(a, "lu_solve");
  if (b.rows() != a.rows() || b.cols() == 0)
    throw DimensionMismatch("lu_solve: right-hand side has " + std::to_string(b.rows()) +
                            " rows, expected " + std::to_string(a.rows()));
  require_finite(a, "lu_solve A");
  require_finite(b, "lu_solve B");

  const std::size_t n = a.rows();
  Matrix lu = a;
  Matrix x = b;
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  const double pivot_floor = kPivotTol * std::max(1.0, max_abs(a));
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(lu(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double cand = std::abs(lu(r, col));
      if (cand > best) {
        best = cand;
        piv = r;
      }
    }
    if (best <= pivot_floor) throw SingularSystem("lu_solve: pivot below threshold");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(piv, j));
      for (std::size_t j = 0; j < x.cols(); ++j) std::swap(x(col, j), x(piv, j));
    }
    const double inv_p = 1.0 / lu(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) * inv_p;
      lu(r, col) = f;
      if (f == 0.0) continue;
      for (std::size_t j = col + 1; j < n; ++j) lu(r, j) -= f * lu(col, j);
      for (std::size_t j = 0; j < x.cols(); ++j) x(r, j) -= f * x(col, j);
    }
  }
  // Back substitution on the upper triangle.
  for (std::size_t col = n; col-- > 0;) {
    const double inv_p = 1.0 / lu(col, col);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = x(col, j);
      for (std::size_t k = col + 1; k < n; ++k) s -= lu(col, k) * x(k, j);
      x(col, j) = s * inv_p;
    }
  }
  return x;
}

std::vector<double> jacobi_eigenvalues(const Matrix& m) {
  require_square(m, "jacobi_eigenvalues");
  require_finite(m, "jacobi_eigenvalues");
  if (!is_symmetric(m)) throw NotSymmetric("jacobi_eigenvalues: input not symmetric");

  const std::size_t n = m.rows();
  // Work on the symmetrized copy so the iteration sees exact symmetry.
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));

  const double target = kJacobiOffDiagTol * std::max(1.0, frobenius_norm(a));
  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps && off_norm() > target; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        // Smaller-magnitude tangent root for numerical stability.
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  if (off_norm() > target) throw Error("jacobi_eigenvalues: no convergence in 100 sweeps");

  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

double lambda_min(const Matrix& symmetric) { return jacobi_eigenvalues(symmetric).front(); }
double lambda_max(const Matrix& symmetric) { return jacobi_eigenvalues(symmetric).back(); }

Matrix solve_lyapunov(const Matrix& a_r, const Matrix& q) {
  require_square(a_r, "solve_lyapunov");
  require_same_shape(a_r, q, "solve_lyapunov");
  require_finite(a_r, "solve_lyapunov A_r");
  if (!is_symmetric(q)) throw NotSymmetric("solve_lyapunov: Q not symmetric");
  if (lambda_min(q) <= 0.0) throw NotPositiveDefinite("solve_lyapunov: Q not positive definite");

  const std::size_t n = a_r.rows();
  const Matrix at = a_r.transpose();

  // Column-stacked vectorization: (I (x) A_r^T + A_r^T (x) I) vec(P) = -vec(Q).
  Matrix big(n * n, n * n, 0.0);
  for (std::size_t bi = 0; bi < n; ++bi) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        big(bi * n + i, bi * n + j) += at(i, j);  // I (x) A_r^T
      }
    }
  }
  for (std::size_t bi = 0; bi < n; ++bi) {
    for (std::size_t bj = 0; bj < n; ++bj) {
      const double w = at(bi, bj);  // A_r^T (x) I
      if (w == 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) big(bi * n + i, bj * n + i) += w;
    }
  }
  Matrix rhs(n * n, 1);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) rhs(j * n + i, 0) = -q(i, j);

  Matrix vec_p;
  try {
    vec_p = lu_solve(big, rhs);
  } catch (const SingularSystem&) {
    throw SingularSystem("solve_lyapunov: vectorized system singular (A_r not Hurwitz?)");
  }

  Matrix p(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) p(i, j) = vec_p(j * n + i, 0);
  // Exact symmetrization; the solve leaves only round-off asymmetry.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (p(i, j) + p(j, i));
      p(i, j) = v;
      p(j, i) = v;
    }

  const Matrix residual = at * p + p * a_r + q;
  if (frobenius_norm(residual) > kLyapunovResidualTol * frobenius_norm(q))
    throw SingularSystem("solve_lyapunov: residual exceeds tolerance");
  if (lambda_min(p) <= 0.0)
    throw SingularSystem("solve_lyapunov: solution not positive definite (A_r not Hurwitz)");
  return p;
}

Matrix left_pseudo_inverse(const Matrix& b) {
  if (b.rows() == 0 || b.cols() == 0 || b.rows() < b.cols())
    throw DimensionMismatch("left_pseudo_inverse: expects tall n x m with m <= n");
  require_finite(b, "left_pseudo_inverse");
  const Matrix bt = b.transpose();
  const Matrix gram = bt * b;
  if (sigma_min(b) <= kRankCutoff) throw RankDeficient("left_pseudo_inverse: rank-deficient B");
  Matrix dagger = lu_solve(gram, bt);
  // Defensive check of the defining identity.
  const Matrix id_err = dagger * b - Matrix::identity(b.cols());
  if (frobenius_norm(id_err) > 1e-10)
    throw RankDeficient("left_pseudo_inverse: identity check failed");
  return dagger;
}

double spectral_norm(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw DimensionMismatch("spectral_norm: empty matrix");
  const Matrix gram = m.transpose() * m;
  const double lmax = lambda_max(gram);
  return std::sqrt(std::max(0.0, lmax));
}

double sigma_min(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw DimensionMismatch("sigma_min: empty matrix");
  const Matrix gram = m.transpose() * m;
  const double lmin = lambda_min(gram);
  return std::sqrt(std::max(0.0, lmin));
}

bool is_hurwitz(const Matrix& a) {
  require_square(a, "is_hurwitz");
  require_finite(a, "is_hurwitz");
  try {
    solve_lyapunov(a, Matrix::identity(a.rows()));
    return true;
  } catch (const SingularSystem&) {
    return false;
  }
}

SpectralConstants spectral_constants(const Matrix& p, const Matrix& q, const Matrix& b) {
  if (!is_symmetric(p)) throw NotSymmetric("spectral_constants: P not symmetric");
  if (!is_symmetric(q)) throw NotSymmetric("spectral_constants: Q not symmetric");
  if (p.rows() != q.rows() || b.rows() != p.rows())
    throw DimensionMismatch("spectral_constants: P, Q, B row counts disagree");

  const auto eig_p = jacobi_eigenvalues(p);
  const auto eig_q = jacobi_eigenvalues(q);
  if (eig_p.front() <= 0.0) throw NotPositiveDefinite("spectral_constants: P not positive definite");
  if (eig_q.front() <= 0.0) throw NotPositiveDefinite("spectral_constants: Q not positive definite");

  const double smin = sigma_min(b);
  if (smin <= kRankCutoff) throw RankDeficient("spectral_constants: B rank-deficient");

  SpectralConstants c;
  c.lambda_min_P = eig_p.front();
  c.lambda_max_P = eig_p.back();
  c.lambda_min_Q = eig_q.front();
  c.norm_B = spectral_norm(b);
  c.norm_B_dagger = 1.0 / smin;
  c.eta = c.lambda_min_Q / (2.0 * c.lambda_max_P * c.norm_B);
  c.sqrt_lambda_min_P = std::sqrt(c.lambda_min_P);
  return c;
}

}  // namespace cmrac
