#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vistr/mvgp.hpp"
#include "vistr/tr.hpp"

namespace vistr {

enum class ResidualModelKind { kMvgp, kIid };

struct DetectorConfig {
  double alpha = 0.005;
  int dof = 0;
  double threshold = 0;  // chi2_quantile(dof, 1 - alpha)
  ResidualModelKind residual_model = ResidualModelKind::kMvgp;

  static DetectorConfig make(double alpha, int dof, ResidualModelKind kind);
};

/// Baseline residual model: pooled Gaussian, time-independent.
struct IidModel {
  Vector mean;  // J
  Matrix cov;   // J x J, symmetric PD (diagonal floored)

  Eigen::Index joints() const { return mean.size(); }
};

/// g = (1/omega) (r - m)^T Sigma^{-1} (r - m), via factorization solve.
double mahalanobis(const Vector& r, const Vector& m, double omega, const Matrix& sigma);

/// Pooled MLE over all frames and cycles (divisor NT), diagonal floored.
IidModel fit_iid(const std::vector<Matrix>& residual_cycles);

void iid_save(const IidModel& m, const std::string& dir, const std::string& run_id);
IidModel iid_load(const std::string& dir);

struct StepResult {
  double g = 0;
  bool alarm = false;
  Vector residual;
  Vector predictive_mean;
  double omega = 1.0;  // predictive scale (1 for the IID model)
};

struct DetectionReport {
  std::vector<double> g;
  std::vector<std::uint8_t> alarms;
  double threshold = 0;
  double alpha = 0;
  std::optional<std::size_t> onset;            // 0-based frame of attack onset, if known
  std::optional<std::size_t> detection_delay;  // frames; empty = no detection
  double alarm_frequency = 0;                  // post-onset flagged fraction
  double false_alarm_rate = 0;                 // flagged fraction on the nominal segment
  double nll = 0;
  double log_vol = 0;
};

/// Per-frame chi-squared detector over one monitored stream. Step calls are
/// strictly sequential per stream; the underlying models are shared immutable.
class Detector {
 public:
  /// mvgp may be null in IID mode and vice versa.
  Detector(const TrModel& tr, const MvgpModel* mvgp, const IidModel* iid, DetectorConfig cfg);

  /// t_star is the 1-based frame index within the cycle.
  StepResult step(double t_star, const Matrix& mask, const Vector& reported);

  /// Aggregate metrics; onset is 0-based within the streamed frames.
  DetectionReport report(std::optional<std::size_t> onset) const;

  const DetectorConfig& config() const { return cfg_; }

 private:
  const TrModel& tr_;
  const MvgpModel* mvgp_;
  const IidModel* iid_;
  DetectorConfig cfg_;
  Eigen::LLT<Matrix> iid_llt_;
  double iid_logdet_ = 0;
  double sigma_logdet_ = 0;

  std::vector<double> g_;
  std::vector<std::uint8_t> alarms_;
  std::vector<double> omega_;
};

void report_save_json(const DetectionReport& rep, const std::string& path,
                      const std::string& run_id);
void report_save_csv(const DetectionReport& rep, const std::string& path);

}  // namespace vistr
