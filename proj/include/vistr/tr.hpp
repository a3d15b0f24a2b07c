#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vistr/tensor.hpp"

namespace vistr {

/// Bilinear vision-to-state map: angles = b_h * mask * b_w.
struct TrModel {
  Matrix b_h;  // J x H, degrees per unit mask intensity
  Vector b_w;  // length W

  Eigen::Index joints() const { return b_h.rows(); }
  Eigen::Index height() const { return b_h.cols(); }
  Eigen::Index width() const { return b_w.size(); }
};

struct TrainConfig {
  // Spatial compression: explicit ranks win over the energy target.
  std::size_t rank_p = 0;  // 0 = use energy target
  std::size_t rank_q = 0;
  double energy_tau = 0.95;
  double als_tolerance = 1e-6;
  std::size_t max_iterations = 200;
  double ridge = 1e-10;
  std::uint64_t seed = 1;
};

struct FitTrace {
  std::vector<double> objective;  // 0.5 * ||A - prediction||_F^2 per iteration
  std::vector<double> delta_h;
  std::vector<double> delta_w;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t rank_p = 0;
  std::size_t rank_q = 0;
};

struct TrFitResult {
  TrModel model;
  FitTrace trace;
};

/// Fit the bilinear map from N replicated cycles of masks (each T x H x W)
/// and joint angles (each T x J) by Tucker compression + alternating least
/// squares on the compressed coefficients.
TrFitResult tr_fit(const std::vector<DenseTensor>& mask_cycles,
                   const std::vector<Matrix>& angle_cycles, const TrainConfig& cfg);

Vector tr_predict(const TrModel& m, const Matrix& mask);

Vector tr_residual(const TrModel& m, const Vector& reported, const Matrix& mask);

struct AccuracyReport {
  Vector rmse_per_joint;
  Vector mae_per_joint;
  double rmse_avg = 0;
  double mae_avg = 0;
};

/// Frame-wise estimation accuracy against reported angles over cycles.
AccuracyReport tr_accuracy(const TrModel& m, const std::vector<DenseTensor>& mask_cycles,
                           const std::vector<Matrix>& angle_cycles);

/// Model files: JSON manifest plus .ten payloads for b_h and b_w next to it.
void tr_save(const TrModel& m, const TrainConfig& cfg, const std::string& dir,
             const std::string& run_id);
TrModel tr_load(const std::string& dir);

void trace_save(const FitTrace& trace, const std::string& path);

}  // namespace vistr
