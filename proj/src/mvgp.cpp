#include "vistr/mvgp.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "vistr/log.hpp"

namespace vistr {

namespace {

using nlohmann::json;

constexpr double kJitterRel = 1e-8;    // relative to sigma_s^2, on the K' diagonal
constexpr double kSigmaFloorDiag = 1e-10;
constexpr double kLogParamBound = 15.0;

Eigen::LLT<Matrix> checked_llt(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + " is not positive definite");
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void check_cycles(const std::vector<Matrix>& cycles) {
  if (cycles.empty()) throw DataError("mvgp: need N >= 1 residual cycles");
  for (const auto& c : cycles)
    if (c.rows() != cycles[0].rows() || c.cols() != cycles[0].cols())
      throw DataError("mvgp: residual cycles must share T x J shape");
}

// Sum_i D_i Sigma^{-1} D_i^T over deviations D_i = R_i - M.
Matrix deviation_outer(const std::vector<Matrix>& cycles, const Matrix& mean_curve,
                       const Eigen::LLT<Matrix>& sigma_llt) {
  const Eigen::Index T = mean_curve.rows();
  Matrix s = Matrix::Zero(T, T);
  for (const auto& r : cycles) {
    Matrix d = r - mean_curve;
    s.noalias() += d * sigma_llt.solve(d.transpose());
  }
  return s;
}

}  // namespace

double se_kernel(const SeKernel& k, double t, double t_prime) {
  if (!(k.sigma_s > 0) || !(k.length_scale > 0))
    throw ConfigError("SE kernel parameters must be positive");
  const double d = t - t_prime;
  return k.sigma_s * k.sigma_s * std::exp(-d * d / (2.0 * k.length_scale * k.length_scale));
}

Matrix empirical_mean(const std::vector<Matrix>& residual_cycles) {
  check_cycles(residual_cycles);
  Matrix m = Matrix::Zero(residual_cycles[0].rows(), residual_cycles[0].cols());
  for (const auto& r : residual_cycles) m += r;
  return m / static_cast<double>(residual_cycles.size());
}

Matrix mvgp_kernel_matrix(const SeKernel& k, const Vector& grid, double noise_var) {
  const Eigen::Index T = grid.size();
  Matrix out(T, T);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = se_kernel(k, grid(i), grid(j));
      out(i, j) = v;
      out(j, i) = v;
    }
  out.diagonal().array() += noise_var + kJitterRel * k.sigma_s * k.sigma_s;
  return out;
}

double mvgp_log_likelihood(const MvgpParams& params, const Matrix& output_cov,
                           const Matrix& mean_curve, const std::vector<Matrix>& residual_cycles) {
  check_cycles(residual_cycles);
  const double n_rep = static_cast<double>(residual_cycles.size());
  const double T = static_cast<double>(mean_curve.rows());
  const double J = static_cast<double>(mean_curve.cols());
  Vector grid = Vector::LinSpaced(mean_curve.rows(), 1.0, T);
  Matrix kprime = mvgp_kernel_matrix(params.kernel(), grid, params.noise_var());
  auto k_llt = checked_llt(kprime, "K'");
  auto s_llt = checked_llt(output_cov, "Sigma");

  double trace_term = 0;
  for (const auto& r : residual_cycles) {
    Matrix d = r - mean_curve;
    trace_term += (s_llt.solve(d.transpose()).array() * k_llt.solve(d).transpose().array()).sum();
  }
  return -0.5 * n_rep * T * J * std::log(2.0 * M_PI) - 0.5 * n_rep * T * log_det_from_llt(s_llt) -
         0.5 * n_rep * J * log_det_from_llt(k_llt) - 0.5 * trace_term;
}

Eigen::Vector3d mvgp_grad_log_likelihood(const MvgpParams& params, const Matrix& output_cov,
                                         const Matrix& mean_curve,
                                         const std::vector<Matrix>& residual_cycles) {
  check_cycles(residual_cycles);
  const double n_rep = static_cast<double>(residual_cycles.size());
  const double J = static_cast<double>(mean_curve.cols());
  const Eigen::Index T = mean_curve.rows();
  const SeKernel kernel = params.kernel();
  const double sigma2 = params.noise_var();
  Vector grid = Vector::LinSpaced(T, 1.0, static_cast<double>(T));

  Matrix kprime = mvgp_kernel_matrix(kernel, grid, sigma2);
  auto k_llt = checked_llt(kprime, "K'");
  auto s_llt = checked_llt(output_cov, "Sigma");
  Matrix kinv = k_llt.solve(Matrix::Identity(T, T));
  Matrix s = deviation_outer(residual_cycles, mean_curve, s_llt);
  // d L / d theta = tr(W dK'/dtheta), W = 0.5 (K'^{-1} S K'^{-1} - N J K'^{-1}).
  Matrix w = 0.5 * (kinv * s * kinv - n_rep * J * kinv);

  // Noise-free kernel block and squared-distance matrix.
  Matrix ktheta(T, T);
  Matrix dist2(T, T);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < T; ++j) {
      ktheta(i, j) = se_kernel(kernel, grid(i), grid(j));
      const double d = grid(i) - grid(j);
      dist2(i, j) = d * d;
    }
  const double jitter = kJitterRel * kernel.sigma_s * kernel.sigma_s;
  const double ell2 = kernel.length_scale * kernel.length_scale;

  Eigen::Vector3d g;
  g(0) = (w.array() * (ktheta.array() * dist2.array() / ell2)).sum();               // log ell
  g(1) = (w.array() * (2.0 * ktheta.array())).sum() + w.trace() * 2.0 * jitter;     // log sigma_s
  g(2) = w.trace() * 2.0 * sigma2;                                                  // log sigma
  return g;
}

void MvgpModel::refresh_cache() {
  const double n_eff = mode == MvgpMode::kReplicationAveraged
                           ? static_cast<double>(std::max<std::size_t>(replication_count, 1))
                           : 1.0;
  kprime = mvgp_kernel_matrix(kernel, train_grid, noise_var / n_eff);
  kprime_llt = checked_llt(kprime, "K'");
  sigma_llt = checked_llt(output_cov, "Sigma");
  weighted_deviation = kprime_llt.solve(conditioning - mean_curve);
}

MvgpModel mvgp_fit(const std::vector<Matrix>& residual_cycles, const MvgpFitOptions& opts) {
  check_cycles(residual_cycles);
  const std::size_t n_rep = residual_cycles.size();
  const Eigen::Index T = residual_cycles[0].rows();
  const Eigen::Index J = residual_cycles[0].cols();
  if (T < 2) throw DataError("mvgp_fit: need T >= 2 frames");
  if (n_rep < 2) log_warn("mvgp_fit: N=1 replication; hyperparameters are weakly identified");

  MvgpModel model;
  model.mean_curve = empirical_mean(residual_cycles);
  model.train_grid = Vector::LinSpaced(T, 1.0, static_cast<double>(T));
  model.replication_count = n_rep;
  model.mode = opts.mode;

  double pooled_sq = 0;
  for (const auto& r : residual_cycles) pooled_sq += (r - model.mean_curve).squaredNorm();
  const double pooled_std =
      std::sqrt(pooled_sq / static_cast<double>(n_rep * T * J));

  if (pooled_std < 1e-12) {
    // All replications identical: zero-variance residuals.
    log_warn("mvgp_fit: zero residual variance; returning floored degenerate model");
    model.degenerate = true;
    model.kernel = {1e-6, static_cast<double>(T) / 10.0};
    model.noise_var = 1e-12;
    model.output_cov = Matrix::Identity(J, J) * kSigmaFloorDiag;
    model.conditioning = model.mean_curve;
    MvgpParams p{std::log(model.kernel.length_scale), std::log(model.kernel.sigma_s),
                 0.5 * std::log(model.noise_var)};
    model.final_log_likelihood =
        mvgp_log_likelihood(p, model.output_cov, model.mean_curve, residual_cycles);
    model.refresh_cache();
    return model;
  }

  auto sigma_update = [&](const MvgpParams& p) {
    Matrix kprime = mvgp_kernel_matrix(p.kernel(), model.train_grid, p.noise_var());
    auto k_llt = checked_llt(kprime, "K'");
    Matrix sigma = Matrix::Zero(J, J);
    for (const auto& r : residual_cycles) {
      Matrix d = r - model.mean_curve;
      sigma.noalias() += d.transpose() * k_llt.solve(d);
    }
    sigma /= static_cast<double>(n_rep * T);
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    sigma.diagonal().array() += kSigmaFloorDiag;
    return sigma;
  };

  auto clamp = [](MvgpParams p) {
    p.log_ell = std::clamp(p.log_ell, -kLogParamBound, kLogParamBound);
    p.log_sigma_s = std::clamp(p.log_sigma_s, -kLogParamBound, kLogParamBound);
    p.log_sigma = std::clamp(p.log_sigma, -kLogParamBound, kLogParamBound);
    return p;
  };

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  double best_ll = -std::numeric_limits<double>::infinity();
  MvgpParams best_params{};
  Matrix best_sigma;

  for (std::size_t start = 0; start < std::max<std::size_t>(opts.starts, 1); ++start) {
    MvgpParams p;
    p.log_ell = std::log(static_cast<double>(T) / 10.0);
    p.log_sigma_s = std::log(pooled_std);
    p.log_sigma = std::log(pooled_std / 3.0);
    if (start > 0) {
      p.log_ell += unif(rng);
      p.log_sigma_s += unif(rng);
      p.log_sigma += unif(rng);
    }
    p = clamp(p);

    Matrix sigma = sigma_update(p);
    double ll = mvgp_log_likelihood(p, sigma, model.mean_curve, residual_cycles);

    for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
      const double ll_at_entry = ll;

      Matrix sigma_cand = sigma_update(p);
      double ll_cand = mvgp_log_likelihood(p, sigma_cand, model.mean_curve, residual_cycles);
      if (ll_cand >= ll) {
        sigma = std::move(sigma_cand);
        ll = ll_cand;
      }

      Eigen::Vector3d g =
          mvgp_grad_log_likelihood(p, sigma, model.mean_curve, residual_cycles);
      double step = 0.5;
      bool accepted = false;
      for (int bt = 0; bt < 40; ++bt) {
        MvgpParams cand = clamp({p.log_ell + step * g(0), p.log_sigma_s + step * g(1),
                                 p.log_sigma + step * g(2)});
        double cand_ll;
        try {
          cand_ll = mvgp_log_likelihood(cand, sigma, model.mean_curve, residual_cycles);
        } catch (const NumericalError&) {
          step *= 0.5;
          continue;
        }
        if (cand_ll > ll + 1e-4 * step * g.squaredNorm()) {
          p = cand;
          ll = cand_ll;
          accepted = true;
          break;
        }
        step *= 0.5;
      }

      if (ll - ll_at_entry < opts.tolerance) break;
      if (!accepted && ll - ll_at_entry < opts.tolerance) break;
    }

    if (ll > best_ll) {
      best_ll = ll;
      best_params = p;
      best_sigma = sigma;
    }
  }

  model.kernel = best_params.kernel();
  model.noise_var = best_params.noise_var();
  model.output_cov = best_sigma;
  model.conditioning = model.mean_curve;  // Rbar defaults to the nominal mean
  model.final_log_likelihood = best_ll;
  model.refresh_cache();
  return model;
}

PredictiveDist mvgp_predict(const MvgpModel& model, double t_star) {
  if (!model.fitted()) throw DataError("mvgp_predict: model is not fitted");
  const Eigen::Index T = model.frames();

  // Off-grid locations snap to the nearest training index.
  double t_eval = t_star;
  const double lo = model.train_grid(0);
  const double hi = model.train_grid(T - 1);
  if (t_star < lo || t_star > hi || t_star != std::floor(t_star)) {
    t_eval = std::clamp(std::round(t_star), lo, hi);
    log_warn("mvgp_predict: off-grid frame index snapped to nearest training index");
  }
  const Eigen::Index nearest = static_cast<Eigen::Index>(t_eval - lo);

  Vector k_star(T);
  for (Eigen::Index i = 0; i < T; ++i)
    k_star(i) = se_kernel(model.kernel, model.train_grid(i), t_eval);
  const double k_star_star = se_kernel(model.kernel, t_eval, t_eval) + model.noise_var +
                             kJitterRel * model.kernel.sigma_s * model.kernel.sigma_s;

  PredictiveDist out;
  out.mean = model.mean_curve.row(nearest).transpose() +
             model.weighted_deviation.transpose() * k_star;
  out.scale = std::max(k_star_star - k_star.dot(model.kprime_llt.solve(k_star)), 0.0);
  out.output_cov = model.output_cov;
  return out;
}

void mvgp_save(const MvgpModel& model, const std::string& dir, const std::string& run_id) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["T"] = model.frames();
  manifest["J"] = model.joints();
  manifest["N"] = model.replication_count;
  manifest["kernel"] = {{"sigma_s", model.kernel.sigma_s}, {"ell", model.kernel.length_scale}};
  manifest["sigma2"] = model.noise_var;
  manifest["mode"] =
      model.mode == MvgpMode::kNominalPrior ? "nominal_prior" : "replication_averaged";
  manifest["degenerate"] = model.degenerate;
  manifest["log_likelihood"] = model.final_log_likelihood;
  manifest["created"] = run_id;
  std::ofstream f(fs::path(dir) / "mvgp.json");
  f << manifest.dump(2) << "\n";
  write_ten_matrix((fs::path(dir) / "mvgp_M.ten").string(), model.mean_curve);
  write_ten_matrix((fs::path(dir) / "mvgp_Sigma.ten").string(), model.output_cov);
  write_ten_matrix((fs::path(dir) / "mvgp_Rbar.ten").string(), model.conditioning);
}

MvgpModel mvgp_load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "mvgp.json");
  if (!f) throw DataError("missing MVGP model manifest in " + dir);
  json manifest = json::parse(f);
  MvgpModel model;
  model.mean_curve = read_ten_matrix((fs::path(dir) / "mvgp_M.ten").string());
  model.output_cov = read_ten_matrix((fs::path(dir) / "mvgp_Sigma.ten").string());
  model.conditioning = read_ten_matrix((fs::path(dir) / "mvgp_Rbar.ten").string());
  model.kernel.sigma_s = manifest.at("kernel").at("sigma_s").get<double>();
  model.kernel.length_scale = manifest.at("kernel").at("ell").get<double>();
  model.noise_var = manifest.at("sigma2").get<double>();
  model.replication_count = manifest.at("N").get<std::size_t>();
  model.degenerate = manifest.value("degenerate", false);
  model.final_log_likelihood = manifest.value("log_likelihood", 0.0);
  const std::string mode = manifest.at("mode").get<std::string>();
  if (mode == "nominal_prior")
    model.mode = MvgpMode::kNominalPrior;
  else if (mode == "replication_averaged")
    model.mode = MvgpMode::kReplicationAveraged;
  else
    throw DataError("unknown MVGP mode '" + mode + "' in " + dir);
  const Eigen::Index T = model.frames();
  if (T != manifest.at("T").get<Eigen::Index>() ||
      model.joints() != manifest.at("J").get<Eigen::Index>())
    throw DataError("MVGP manifest/payload shape mismatch in " + dir);
  model.train_grid = Vector::LinSpaced(T, 1.0, static_cast<double>(T));
  model.refresh_cache();
  return model;
}

}  // namespace vistr
