#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <string>
#include <vector>

#include "vistr/tensor.hpp"

namespace vistr {

/// Squared-exponential kernel over frame indices.
struct SeKernel {
  double sigma_s = 1.0;     // signal std, degrees
  double length_scale = 1.0;  // frames
};

double se_kernel(const SeKernel& k, double t, double t_prime);

/// Conditioning rule used during online prediction.
enum class MvgpMode {
  kNominalPrior,         // condition on the mean curve itself: mhat = m_star
  kReplicationAveraged,  // condition on the averaged nominal residuals, noise sigma2/N
};

struct MvgpFitOptions {
  std::size_t max_iterations = 500;
  double tolerance = 1e-8;
  std::size_t starts = 3;
  std::uint64_t seed = 7;
  MvgpMode mode = MvgpMode::kNominalPrior;
};

/// Matrix-variate GP over residual cycles: rows indexed by frame (SE kernel),
/// columns by joint (output covariance Sigma).
struct MvgpModel {
  Matrix mean_curve;       // T x J empirical mean m(t)
  SeKernel kernel;
  double noise_var = 0.0;  // sigma^2
  Matrix output_cov;       // J x J, symmetric PD
  Vector train_grid;       // frame indices 1..T
  Matrix conditioning;     // Rbar, T x J
  std::size_t replication_count = 0;
  MvgpMode mode = MvgpMode::kNominalPrior;
  bool degenerate = false;
  double final_log_likelihood = 0.0;

  // Cached factorizations / solves (read-only after fit).
  Matrix kprime;                 // conditioning-grid kernel matrix (mode-dependent noise)
  Eigen::LLT<Matrix> kprime_llt;
  Eigen::LLT<Matrix> sigma_llt;
  Matrix weighted_deviation;     // K'^{-1} (Rbar - M), T x J

  bool fitted() const { return train_grid.size() > 0; }
  Eigen::Index frames() const { return mean_curve.rows(); }
  Eigen::Index joints() const { return mean_curve.cols(); }

  /// Rebuild cached factorizations from the primary fields.
  void refresh_cache();
};

struct PredictiveDist {
  Vector mean;        // J
  double scale = 0;   // Omega-hat >= 0
  Matrix output_cov;  // Sigma (shared column covariance)

  Matrix covariance() const { return scale * output_cov; }
};

Matrix empirical_mean(const std::vector<Matrix>& residual_cycles);

/// Kernel parameters optimized on the log scale, in this order.
struct MvgpParams {
  double log_ell = 0;
  double log_sigma_s = 0;
  double log_sigma = 0;

  SeKernel kernel() const { return {std::exp(log_sigma_s), std::exp(log_ell)}; }
  double noise_var() const { return std::exp(2 * log_sigma); }
};

/// K_theta + (noise_var + 1e-8 sigma_s^2) I on the given grid.
Matrix mvgp_kernel_matrix(const SeKernel& k, const Vector& grid, double noise_var);

/// Matrix-variate Gaussian log-likelihood of the residual cycles.
double mvgp_log_likelihood(const MvgpParams& params, const Matrix& output_cov,
                           const Matrix& mean_curve, const std::vector<Matrix>& residual_cycles);

/// Analytic gradient over (log ell, log sigma_s, log sigma), output covariance held fixed.
Eigen::Vector3d mvgp_grad_log_likelihood(const MvgpParams& params, const Matrix& output_cov,
                                         const Matrix& mean_curve,
                                         const std::vector<Matrix>& residual_cycles);

MvgpModel mvgp_fit(const std::vector<Matrix>& residual_cycles, const MvgpFitOptions& opts = {});

PredictiveDist mvgp_predict(const MvgpModel& model, double t_star);

/// Model files: JSON manifest plus .ten payloads for M, Sigma, Rbar.
void mvgp_save(const MvgpModel& model, const std::string& dir, const std::string& run_id);
MvgpModel mvgp_load(const std::string& dir);

}  // namespace vistr
