#include "vistr/tucker.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace vistr {

namespace {

// Descending eigen-pairs of the mode-n Gram matrix: eigenvalues are squared
// singular values of the unfolding, eigenvectors its left singular vectors.
void mode_gram_eig(const DenseTensor& x, std::size_t n, Matrix& vecs, Vector& vals) {
  Matrix unf = mode_unfold(x, n);
  Matrix gram = unf * unf.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("mode Gram eigendecomposition failed");
  const Eigen::Index k = gram.rows();
  vecs.resize(k, k);
  vals.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {  // ascending -> descending
    vals(i) = std::max(es.eigenvalues()(k - 1 - i), 0.0);
    vecs.col(i) = es.eigenvectors().col(k - 1 - i);
  }
}

void fix_column_signs(Matrix& u) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    Eigen::Index imax = 0;
    u.col(c).cwiseAbs().maxCoeff(&imax);
    if (u(imax, c) < 0) u.col(c) = -u.col(c);
  }
}

}  // namespace

TuckerFactors hosvd(const DenseTensor& x, const std::vector<ModeSpec>& spec) {
  const std::size_t order = x.order();
  if (spec.size() != order) throw DataError("hosvd: one ModeSpec per mode required");
  const double total_energy = inner(x, x);

  TuckerFactors out;
  out.factors.resize(order);
  out.energy.resize(order, 1.0);

  if (total_energy == 0.0) {
    // All-zero tensor: rank-1 zero factorization.
    out.degenerate = true;
    std::vector<std::size_t> core_dims(order, 1);
    out.core = DenseTensor(core_dims);
    for (std::size_t n = 0; n < order; ++n) {
      Matrix e1 = Matrix::Zero(static_cast<Eigen::Index>(x.dim(n)), 1);
      e1(0, 0) = 1.0;
      out.factors[n] = e1;
    }
    return out;
  }

  for (std::size_t n = 0; n < order; ++n) {
    Matrix vecs;
    Vector vals;
    mode_gram_eig(x, n, vecs, vals);
    const double mode_total = vals.sum();
    std::size_t rank;
    if (spec[n].rank) {
      rank = *spec[n].rank;
      if (rank < 1 || rank > x.dim(n)) throw DataError("hosvd: rank out of range for mode " +
                                                       std::to_string(n));
    } else if (spec[n].energy) {
      const double tau = *spec[n].energy;
      if (!(tau > 0.0 && tau <= 1.0)) throw DataError("hosvd: energy target must be in (0,1]");
      rank = x.dim(n);
      double cum = 0;
      for (Eigen::Index i = 0; i < vals.size(); ++i) {
        cum += vals(i);
        if (cum >= tau * mode_total) {
          rank = static_cast<std::size_t>(i) + 1;
          break;
        }
      }
    } else {
      rank = x.dim(n);
    }
    Matrix u = vecs.leftCols(static_cast<Eigen::Index>(rank));
    fix_column_signs(u);
    out.factors[n] = u;
    out.energy[n] =
        mode_total > 0 ? vals.head(static_cast<Eigen::Index>(rank)).sum() / mode_total : 1.0;
  }

  DenseTensor core = x;
  for (std::size_t n = 0; n < order; ++n)
    core = mode_mul(core, out.factors[n].transpose(), n);
  out.core = std::move(core);
  return out;
}

TuckerFactors hosvd_ranks(const DenseTensor& x, const std::vector<std::size_t>& ranks) {
  std::vector<ModeSpec> spec;
  spec.reserve(ranks.size());
  for (std::size_t r : ranks) spec.push_back(ModeSpec::of_rank(r));
  return hosvd(x, spec);
}

TuckerFactors hosvd_energy(const DenseTensor& x, double tau) {
  std::vector<ModeSpec> spec(x.order(), ModeSpec::of_energy(tau));
  return hosvd(x, spec);
}

DenseTensor tucker_reconstruct(const TuckerFactors& f) {
  DenseTensor out = f.core;
  if (f.factors.size() != out.order()) throw DataError("tucker_reconstruct: factor count mismatch");
  for (std::size_t n = 0; n < f.factors.size(); ++n) out = mode_mul(out, f.factors[n], n);
  return out;
}

}  // namespace vistr
