#include "noetherkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace noether {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const Vector& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged rows");
    std::size_t j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions disagree");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.cols(), p = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * p;
    const double* ai = a.data() + i * n;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.data() + k * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
  require(a.cols() == x.size(), "matvec: dimensions disagree");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    const double* ai = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) s += ai[j] * x[j];
    y[i] = s;
  }
  return y;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "matrix add: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "matrix sub: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
  return c;
}

Vector operator+(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "vector add: size mismatch");
  Vector c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Vector operator-(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "vector sub: size mismatch");
  Vector c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Vector operator*(double s, const Vector& a) {
  Vector c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
  return c;
}

double trace(const Matrix& a) {
  require(a.rows() == a.cols(), "trace: matrix not square");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

Vector diagonal(const Matrix& a) {
  const std::size_t n = std::min(a.rows(), a.cols());
  Vector d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i);
  return d;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

double norm(const Vector& v) {
  double s = 0.0;
  for (double x : v.data) s += x * x;
  return std::sqrt(s);
}

double dot(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "frobenius_dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

Matrix inverse(const Matrix& a) {
  require(a.rows() == a.cols(), "inverse: matrix not square");
  const std::size_t n = a.rows();
  if (n == 0) return Matrix();
  const double scale = max_abs(a);
  const double threshold = 1e-12 * (scale > 0.0 ? scale : 1.0);

  // Gauss-Jordan with partial pivoting on [a | I].
  Matrix lu = a;
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(lu(r, col)) > std::fabs(lu(piv, col))) piv = r;
    const double pivot = lu(piv, col);
    if (std::fabs(pivot) < threshold)
      throw SingularMatrixError("inverse: pivot below singularity threshold",
                                std::fabs(pivot));
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(lu(piv, j), lu(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
    }
    const double inv_pivot = 1.0 / pivot;
    for (std::size_t j = 0; j < n; ++j) {
      lu(col, j) *= inv_pivot;
      inv(col, j) *= inv_pivot;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = lu(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        lu(r, j) -= f * lu(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

double det(const Matrix& a) {
  require(a.rows() == a.cols(), "det: matrix not square");
  const std::size_t n = a.rows();
  Matrix lu = a;
  double d = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(lu(r, col)) > std::fabs(lu(piv, col))) piv = r;
    const double pivot = lu(piv, col);
    if (pivot == 0.0) return 0.0;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(piv, j), lu(col, j));
      d = -d;
    }
    d *= pivot;
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) / pivot;
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) lu(r, j) -= f * lu(col, j);
    }
  }
  return d;
}

EighResult eigh_jacobi(const Matrix& a) {
  require(a.rows() == a.cols(), "eigh_jacobi: matrix not square");
  const std::size_t n = a.rows();
  Matrix d = a;
  Matrix v = Matrix::identity(n);
  const double total = frobenius_norm(a);
  const double stop = 1e-12 * total;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * d(i, j) * d(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 60 && off_norm() > stop; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = d(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (d(q, q) - d(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double dkp = d(k, p), dkq = d(k, q);
          d(k, p) = c * dkp - s * dkq;
          d(k, q) = s * dkp + c * dkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double dpk = d(p, k), dqk = d(q, k);
          d(p, k) = c * dpk - s * dqk;
          d(q, k) = s * dpk + c * dqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return d(i, i) < d(j, j); });
  EighResult out;
  out.eigenvalues = Vector(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = d(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

SvdResult svd_jacobi(const Matrix& a) {
  if (a.rows() < a.cols()) {
    // Work on the transpose, then swap the factors back.
    SvdResult t = svd_jacobi(transpose(a));
    return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  }
  const std::size_t m = a.rows(), n = a.cols();
  Matrix u = a;                      // columns get orthogonalized in place
  Matrix v = Matrix::identity(n);

  auto col_dot = [&](std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += u(i, p) * u(i, q);
    return s;
  };

  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = col_dot(p, p);
        const double beta = col_dot(q, q);
        const double gamma = col_dot(p, q);
        if (std::fabs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(zeta) + std::sqrt(zeta * zeta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double uip = u(i, p), uiq = u(i, q);
          u(i, p) = c * uip - s * uiq;
          u(i, q) = s * uip + c * uiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += u(i, j) * u(i, j);
    sigma[j] = std::sqrt(s);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

  SvdResult out;
  out.sigma = Vector(n);
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  const double sig_max = sigma[order[0]];
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.sigma[j] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    if (sigma[src] > sig_max * 1e-15 && sigma[src] > 0.0) {
      const double inv_s = 1.0 / sigma[src];
      for (std::size_t i = 0; i < m; ++i) out.u(i, j) = u(i, src) * inv_s;
    }
  }
  // Numerically-zero singular values leave u columns empty; complete them to
  // an orthonormal set from canonical basis vectors.
  for (std::size_t j = 0; j < n; ++j) {
    double cn = 0.0;
    for (std::size_t i = 0; i < m; ++i) cn += out.u(i, j) * out.u(i, j);
    if (cn > 0.5) continue;
    for (std::size_t e = 0; e < m; ++e) {
      Vector cand(m);
      cand[e] = 1.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += cand[i] * out.u(i, k);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.u(i, k);
      }
      const double cnorm = norm(cand);
      if (cnorm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, j) = cand[i] / cnorm;
        break;
      }
    }
  }
  return out;
}

Matrix pseudo_inverse(const Matrix& a, double rel_cutoff) {
  SvdResult s = svd_jacobi(a);
  const std::size_t r = s.sigma.size();
  const double cutoff = rel_cutoff * (r ? s.sigma[0] : 0.0);
  Matrix mid(r, r);
  for (std::size_t i = 0; i < r; ++i)
    mid(i, i) = s.sigma[i] > cutoff ? 1.0 / s.sigma[i] : 0.0;
  return matmul(s.v, matmul(mid, transpose(s.u)));
}

double operator_norm(const Matrix& a) {
  const std::size_t n = a.cols();
  if (n == 0 || a.rows() == 0) return 0.0;
  const Matrix at = transpose(a);
  // Deterministic start vector with mildly uneven entries so it is not
  // accidentally orthogonal to the leading singular direction.
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 1e-3 * static_cast<double>(i);
  const double xn = norm(x);
  for (std::size_t i = 0; i < n; ++i) x[i] /= xn;
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vector y = matvec(at, matvec(a, x));
    const double next = norm(y);  // x is unit, so this estimates lambda_max
    if (next == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / next;
    if (it > 0 && std::fabs(next - lambda) <= 1e-10 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(lambda);
}

Matrix qr_orthonormal(const Matrix& a) {
  require(a.rows() >= a.cols(), "qr_orthonormal: needs rows >= cols");
  const std::size_t m = a.rows(), n = a.cols();
  // Modified Gram-Schmidt with one re-orthogonalization pass: plenty for the
  // well-conditioned random inputs this is used on, and deterministic. The
  // implied R diagonal is the per-column residual norm, positive by
  // construction, which is exactly the sign convention wanted when sampling
  // orthogonal matrices from Gaussian ones.
  Matrix q = a;
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += q(i, k) * q(i, j);
        for (std::size_t i = 0; i < m; ++i) q(i, j) -= proj * q(i, k);
      }
    }
    double cn = 0.0;
    for (std::size_t i = 0; i < m; ++i) cn += q(i, j) * q(i, j);
    cn = std::sqrt(cn);
    if (cn < 1e-300)
      throw SingularMatrixError("qr_orthonormal: rank-deficient input", cn);
    for (std::size_t i = 0; i < m; ++i) q(i, j) /= cn;
  }
  return q;
}

namespace {

double simpson(double fa, double fm, double fb, double a, double b) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a, double b,
                     double fa, double fm, double fb, double whole, double tol,
                     int depth) {
  if (depth > 50)
    throw QuadratureError("integrate_adaptive: recursion depth exhausted");
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(fa, flm, fm, a, m);
  const double right = simpson(fm, frm, fb, m, b);
  const double delta = left + right - whole;
  if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double lo,
                          double hi, double tol) {
  if (lo == hi) return 0.0;
  if (lo > hi) return -integrate_adaptive(f, hi, lo, tol);
  const double m = 0.5 * (lo + hi);
  const double fa = f(lo), fm = f(m), fb = f(hi);
  const double whole = simpson(fa, fm, fb, lo, hi);
  return adaptive_step(f, lo, hi, fa, fm, fb, whole, tol, 0);
}

}  // namespace noether
