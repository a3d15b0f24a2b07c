#include "vistr/detector.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vistr/chi2.hpp"

namespace vistr {

namespace {

using nlohmann::json;

double log_det_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + " is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

DetectorConfig DetectorConfig::make(double alpha, int dof, ResidualModelKind kind) {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must be in (0,1)");
  DetectorConfig cfg;
  cfg.alpha = alpha;
  cfg.dof = dof;
  cfg.residual_model = kind;
  cfg.threshold = chi2_quantile(dof, 1.0 - alpha);
  return cfg;
}

double mahalanobis(const Vector& r, const Vector& m, double omega, const Matrix& sigma) {
  if (r.size() != m.size() || sigma.rows() != r.size() || sigma.cols() != r.size())
    throw DataError("mahalanobis: shape mismatch");
  if (!(omega > 0)) throw NumericalError("mahalanobis: omega must be > 0");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("mahalanobis: Sigma not PD");
  Vector d = r - m;
  return d.dot(llt.solve(d)) / omega;
}

IidModel fit_iid(const std::vector<Matrix>& residual_cycles) {
  if (residual_cycles.empty()) throw DataError("fit_iid: need residual cycles");
  const Eigen::Index J = residual_cycles[0].cols();
  std::size_t samples = 0;
  for (const auto& r : residual_cycles) {
    if (r.cols() != J) throw DataError("fit_iid: inconsistent joint counts");
    samples += static_cast<std::size_t>(r.rows());
  }
  if (samples < 2) throw DataError("fit_iid: need at least two samples");

  IidModel model;
  model.mean = Vector::Zero(J);
  for (const auto& r : residual_cycles) model.mean += r.colwise().sum().transpose();
  model.mean /= static_cast<double>(samples);

  model.cov = Matrix::Zero(J, J);
  for (const auto& r : residual_cycles) {
    Matrix d = r.rowwise() - model.mean.transpose();
    model.cov.noalias() += d.transpose() * d;
  }
  model.cov /= static_cast<double>(samples);
  model.cov = 0.5 * (model.cov + model.cov.transpose()).eval();
  model.cov.diagonal().array() += 1e-10;
  return model;
}

void iid_save(const IidModel& m, const std::string& dir, const std::string& run_id) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json j;
  j["J"] = m.joints();
  j["created"] = run_id;
  j["mean"] = std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size());
  std::vector<std::vector<double>> cov;
  for (Eigen::Index r = 0; r < m.cov.rows(); ++r) {
    cov.emplace_back();
    for (Eigen::Index c = 0; c < m.cov.cols(); ++c) cov.back().push_back(m.cov(r, c));
  }
  j["cov"] = cov;
  std::ofstream f(fs::path(dir) / "iid.json");
  f << j.dump(2) << "\n";
}

IidModel iid_load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "iid.json");
  if (!f) throw DataError("missing IID model manifest in " + dir);
  json j = json::parse(f);
  const Eigen::Index J = j.at("J").get<Eigen::Index>();
  IidModel m;
  m.mean = Vector(J);
  auto mean = j.at("mean").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(mean.size()) != J) throw DataError("iid mean length mismatch");
  for (Eigen::Index i = 0; i < J; ++i) m.mean(i) = mean[static_cast<std::size_t>(i)];
  m.cov = Matrix(J, J);
  auto cov = j.at("cov").get<std::vector<std::vector<double>>>();
  if (static_cast<Eigen::Index>(cov.size()) != J) throw DataError("iid cov shape mismatch");
  for (Eigen::Index r = 0; r < J; ++r)
    for (Eigen::Index c = 0; c < J; ++c) m.cov(r, c) = cov[static_cast<std::size_t>(r)].at(
        static_cast<std::size_t>(c));
  return m;
}

Detector::Detector(const TrModel& tr, const MvgpModel* mvgp, const IidModel* iid,
                   DetectorConfig cfg)
    : tr_(tr), mvgp_(mvgp), iid_(iid), cfg_(cfg) {
  if (cfg_.residual_model == ResidualModelKind::kMvgp) {
    if (!mvgp_ || !mvgp_->fitted()) throw DataError("detector: MVGP model missing or unfitted");
    if (mvgp_->joints() != tr_.joints()) throw DataError("detector: TR/MVGP joint mismatch");
    sigma_logdet_ = log_det_spd(mvgp_->output_cov, "Sigma");
  } else {
    if (!iid_) throw DataError("detector: IID model missing");
    if (iid_->joints() != tr_.joints()) throw DataError("detector: TR/IID joint mismatch");
    iid_llt_ = Eigen::LLT<Matrix>(iid_->cov);
    if (iid_llt_.info() != Eigen::Success)
      throw NumericalError("detector: IID covariance not PD");
    iid_logdet_ = log_det_spd(iid_->cov, "Sigma_1");
  }
}

StepResult Detector::step(double t_star, const Matrix& mask, const Vector& reported) {
  StepResult out;
  out.residual = tr_residual(tr_, reported, mask);

  if (cfg_.residual_model == ResidualModelKind::kMvgp) {
    PredictiveDist pred = mvgp_predict(*mvgp_, t_star);
    const double sig2 = mvgp_->kernel.sigma_s * mvgp_->kernel.sigma_s;
    out.omega = std::max(pred.scale, 1e-12 * sig2);  // guard near-interpolation cancellation
    out.predictive_mean = std::move(pred.mean);
    Vector d = out.residual - out.predictive_mean;
    out.g = d.dot(mvgp_->sigma_llt.solve(d)) / out.omega;
  } else {
    out.omega = 1.0;
    out.predictive_mean = iid_->mean;
    Vector d = out.residual - out.predictive_mean;
    out.g = d.dot(iid_llt_.solve(d));
  }
  out.alarm = out.g > cfg_.threshold;

  g_.push_back(out.g);
  alarms_.push_back(out.alarm ? 1 : 0);
  omega_.push_back(out.omega);
  return out;
}

DetectionReport Detector::report(std::optional<std::size_t> onset) const {
  DetectionReport rep;
  rep.g = g_;
  rep.alarms = alarms_;
  rep.threshold = cfg_.threshold;
  rep.alpha = cfg_.alpha;
  rep.onset = onset;

  const std::size_t n = g_.size();
  const double dof = static_cast<double>(cfg_.dof);
  const double base_logdet =
      cfg_.residual_model == ResidualModelKind::kMvgp ? sigma_logdet_ : iid_logdet_;

  double nll = 0, logvol = 0;
  for (std::size_t t = 0; t < n; ++t) {
    // log|Sigma_t| = J log(omega_t) + log|Sigma|; quadratic form equals g_t.
    const double logdet_t = dof * std::log(omega_[t]) + base_logdet;
    logvol += 0.5 * logdet_t;
    nll += 0.5 * (dof * std::log(2.0 * M_PI) + logdet_t) + 0.5 * g_[t];
  }
  rep.nll = n ? nll / static_cast<double>(n) : 0;
  rep.log_vol = n ? logvol / static_cast<double>(n) : 0;

  std::size_t nominal_end = onset.value_or(n);
  std::size_t nominal_alarms = 0;
  for (std::size_t t = 0; t < std::min(nominal_end, n); ++t) nominal_alarms += alarms_[t];
  rep.false_alarm_rate =
      nominal_end > 0 ? static_cast<double>(nominal_alarms) / static_cast<double>(nominal_end) : 0;

  if (onset && *onset < n) {
    std::size_t flagged = 0;
    std::optional<std::size_t> first;
    for (std::size_t t = *onset; t < n; ++t) {
      if (alarms_[t]) {
        ++flagged;
        if (!first) first = t - *onset;
      }
    }
    rep.detection_delay = first;
    rep.alarm_frequency = static_cast<double>(flagged) / static_cast<double>(n - *onset);
  }
  return rep;
}

void report_save_json(const DetectionReport& rep, const std::string& path,
                      const std::string& run_id) {
  json j;
  j["g"] = rep.g;
  j["alarms"] = rep.alarms;
  j["threshold"] = rep.threshold;
  j["alpha"] = rep.alpha;
  j["created"] = run_id;
  json metrics;
  metrics["nll"] = rep.nll;
  metrics["log_vol"] = rep.log_vol;
  metrics["false_alarm_rate"] = rep.false_alarm_rate;
  if (rep.onset) {
    metrics["onset"] = *rep.onset;
    metrics["alarm_frequency"] = rep.alarm_frequency;
    if (rep.detection_delay)
      metrics["detection_delay"] = *rep.detection_delay;
    else
      metrics["detection_delay"] = "no detection";
  }
  j["metrics"] = metrics;
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

void report_save_csv(const DetectionReport& rep, const std::string& path) {
  std::ofstream f(path);
  f << "t,g,alarm\n";
  char buf[64];
  for (std::size_t t = 0; t < rep.g.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%d\n", t, rep.g[t], rep.alarms[t] ? 1 : 0);
    f << buf;
  }
}

}  // namespace vistr
