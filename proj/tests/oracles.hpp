#pragma once

// Independent reference implementations used only by the test suite. They
// deliberately avoid the library's code paths: dense Kronecker algebra for the
// matrix-variate Gaussian, raw-space alternating least squares for the
// bilinear estimator, Simpson integration for the chi-squared CDF.

#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// --- Kronecker / matrix-variate Gaussian --------------------------------

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Column-stacking vec.
inline Vector vec(const Matrix& m) {
  Vector v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) v(k++) = m(r, c);
  return v;
}

inline double gauss_log_density(const Vector& x, const Vector& mu, const Matrix& cov) {
  const Eigen::Index n = x.size();
  Eigen::LDLT<Matrix> ldlt(cov);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("oracle: non-PD covariance");
  double logdet = 0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(ldlt.vectorD()(i));
  const Vector d = x - mu;
  return -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI) - 0.5 * logdet -
         0.5 * d.dot(ldlt.solve(d));
}

// Log-density of one residual matrix R (T x J) under the matrix-variate
// normal with mean M, row covariance Kp, column covariance Sigma, evaluated
// through the vectorized N(vec(M), Sigma (x) Kp).
inline double mvn_matrix_log_density(const Matrix& r, const Matrix& m, const Matrix& kp,
                                     const Matrix& sigma) {
  return gauss_log_density(vec(r), vec(m), kron(sigma, kp));
}

struct Conditional {
  Vector mean;
  Matrix cov;
};

// Conditional of a joint Gaussian [xa; xb] given xb = b.
inline Conditional gauss_condition(const Vector& mu_a, const Vector& mu_b, const Matrix& caa,
                                   const Matrix& cab, const Matrix& cbb, const Vector& b) {
  Eigen::LDLT<Matrix> ldlt(cbb);
  Conditional out;
  out.mean = mu_a + cab * ldlt.solve(b - mu_b);
  out.cov = caa - cab * ldlt.solve(cab.transpose());
  return out;
}

// --- Raw-space dense least squares for the bilinear map ------------------
// Model: y[t](j) = bh.row(j) * X_t * bw. Each half of the bilinear objective
// is a plain linear LS problem in the raw H x W space; with the other half
// fixed the optimum is unique (lambda = 0, full column rank), so these exact
// solves provide an independent blockwise-optimality oracle.

inline Matrix dense_ls_bh(const std::vector<Matrix>& masks, const std::vector<Vector>& angles,
                          const Vector& bw) {
  const Eigen::Index h = masks.at(0).rows();
  const Eigen::Index j_count = angles.at(0).size();
  Matrix gram = Matrix::Zero(h, h);
  Matrix rhs = Matrix::Zero(h, j_count);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    const Vector z = masks[t] * bw;  // per-joint regressor
    gram.noalias() += z * z.transpose();
    rhs.noalias() += z * angles[t].transpose();
  }
  return gram.completeOrthogonalDecomposition().solve(rhs).transpose();  // J x H
}

inline Vector dense_ls_bw(const std::vector<Matrix>& masks, const std::vector<Vector>& angles,
                          const Matrix& bh) {
  const Eigen::Index w = masks.at(0).cols();
  Matrix gram = Matrix::Zero(w, w);
  Vector rhs = Vector::Zero(w);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    const Matrix p = bh * masks[t];  // J x W
    gram.noalias() += p.transpose() * p;
    rhs.noalias() += p.transpose() * angles[t];
  }
  return gram.completeOrthogonalDecomposition().solve(rhs);
}

// --- Chi-squared CDF by Simpson integration -----------------------------

inline double chi2_pdf(int dof, double x) {
  if (x <= 0) return 0;
  const double k2 = dof / 2.0;
  return std::exp((k2 - 1) * std::log(x) - x / 2 - k2 * std::log(2.0) - std::lgamma(k2));
}

inline double chi2_cdf_simpson(int dof, double x) {
  if (x <= 0) return 0;
  // Substitute x = u^2: the transformed integrand c * u^{dof-1} e^{-u^2/2}
  // is smooth for every integer dof, so composite Simpson converges fast.
  const int n = 20000;  // even
  const double ub = std::sqrt(x);
  const double h = ub / n;
  const double log_c =
      std::log(2.0) - (dof / 2.0) * std::log(2.0) - std::lgamma(dof / 2.0);
  auto f = [&](double u) {
    if (u == 0) return dof == 1 ? std::exp(log_c) : 0.0;
    return std::exp(log_c + (dof - 1) * std::log(u) - u * u / 2);
  };
  double sum = f(0) + f(ub);
  for (int i = 1; i < n; ++i) sum += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

inline double chi2_quantile_bisect(int dof, double p, double tol = 1e-9) {
  double lo = 0, hi = 1;
  while (chi2_cdf_simpson(dof, hi) < p) hi *= 2;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf_simpson(dof, mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// --- Planar forward kinematics via complex exponentials -----------------

inline std::pair<double, double> fk_complex(const Vector& angles_deg,
                                            const std::vector<double>& links, double bx,
                                            double by) {
  std::complex<double> p(bx, by);
  std::complex<double> dir(1, 0);
  for (Eigen::Index i = 0; i < angles_deg.size(); ++i) {
    dir *= std::polar(1.0, angles_deg(i) * M_PI / 180.0);
    p += links[static_cast<std::size_t>(i)] * dir;
  }
  return {p.real(), p.imag()};
}

// --- Minimal independent PGM (P5) reader --------------------------------

inline Matrix read_pgm_indep(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("oracle: cannot open " + path);
  char magic[3] = {};
  int w = 0, h = 0, maxval = 0;
  if (std::fscanf(f, "%2s %d %d %d", magic, &w, &h, &maxval) != 4 ||
      std::string(magic) != "P5" || maxval != 255) {
    std::fclose(f);
    throw std::runtime_error("oracle: bad PGM header " + path);
  }
  std::fgetc(f);  // single whitespace byte
  Matrix out(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    if (std::fread(row.data(), 1, row.size(), f) != row.size()) {
      std::fclose(f);
      throw std::runtime_error("oracle: truncated PGM " + path);
    }
    for (int c = 0; c < w; ++c) out(r, c) = row[static_cast<std::size_t>(c)] >= 128 ? 1.0 : 0.0;
  }
  std::fclose(f);
  return out;
}

}  // namespace oracle
