#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "vistr/chi2.hpp"
#include "vistr/detector.hpp"
#include "vistr/mvgp.hpp"

using namespace vistr;

namespace {

// Residual cycles drawn from a known matrix-variate GP.
std::vector<Matrix> sample_mvgp(std::size_t n, Eigen::Index t, Eigen::Index j, double ell,
                                double sigma_s, double sigma, const Matrix& sigma_out,
                                std::uint64_t seed) {
  Vector grid = Vector::LinSpaced(t, 1.0, static_cast<double>(t));
  Matrix k = mvgp_kernel_matrix({sigma_s, ell}, grid, sigma * sigma);
  Eigen::LLT<Matrix> kl(k);
  Eigen::LLT<Matrix> sl(sigma_out);
  Matrix lk = kl.matrixL();
  Matrix ls = sl.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0, 1);
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix z(t, j);
    for (Eigen::Index a = 0; a < t; ++a)
      for (Eigen::Index b = 0; b < j; ++b) z(a, b) = gauss(rng);
    out.push_back(lk * z * ls.transpose());
  }
  return out;
}

std::vector<Matrix> random_cycles(std::size_t n, Eigen::Index t, Eigen::Index j,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0, 1);
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix r(t, j);
    for (Eigen::Index a = 0; a < t; ++a)
      for (Eigen::Index b = 0; b < j; ++b) r(a, b) = gauss(rng);
    out.push_back(r);
  }
  return out;
}

Matrix random_spd(Eigen::Index j, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0, 1);
  Matrix a(j, j);
  for (Eigen::Index r = 0; r < j; ++r)
    for (Eigen::Index c = 0; c < j; ++c) a(r, c) = gauss(rng);
  return a * a.transpose() + 0.3 * Matrix::Identity(j, j);
}

}  // namespace

TEST_CASE("se_kernel examples") {
  SeKernel k{1.5, 3.0};
  CHECK(se_kernel(k, 7, 7) == doctest::Approx(1.5 * 1.5).epsilon(1e-14));
  CHECK(se_kernel(k, 0, 1000) <= 1e-300);
  CHECK(se_kernel({1.0, 2.0}, 2, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(se_kernel(k, 0, 1) > se_kernel(k, 0, 2));
  CHECK_THROWS_AS(se_kernel({0.0, 1.0}, 0, 0), ConfigError);
}

TEST_CASE("empirical_mean examples") {
  Matrix c = Matrix::Random(4, 2);
  CHECK(empirical_mean({c}) == c);
  CHECK(empirical_mean({c, Matrix(-c)}).cwiseAbs().maxCoeff() <= 1e-15);
  Matrix ones = Matrix::Ones(3, 2);
  Matrix m = empirical_mean({ones, 2 * ones, 3 * ones});
  CHECK((m.array() - 2.0).abs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(empirical_mean(std::vector<Matrix>{}), DataError);
  CHECK_THROWS_AS(empirical_mean({ones, Matrix::Ones(2, 2)}), DataError);
}

TEST_CASE("log-likelihood standard-normal special case") {
  // K' = Sigma = [1]: choose sigma_s tiny so jitter vanishes, sigma = 1.
  MvgpParams p{0.0, -17.0, 0.0};
  Matrix sigma = Matrix::Identity(1, 1);
  Matrix mean = Matrix::Zero(1, 1);
  double ll = mvgp_log_likelihood(p, sigma, mean, {Matrix::Zero(1, 1)});
  CHECK(ll == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-9));
}

TEST_CASE("log-likelihood matches the Kronecker vectorization oracle") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 8; ++rep) {
    const Eigen::Index t = 2 + static_cast<Eigen::Index>(rng() % 4);  // <= 5
    const Eigen::Index j = 1 + static_cast<Eigen::Index>(rng() % 2);  // <= 2
    const std::size_t n = 1 + rng() % 3;
    auto cycles = random_cycles(n, t, j, rng());
    Matrix mean = empirical_mean(cycles);
    Matrix sigma = random_spd(j, rng());
    MvgpParams p{std::log(1.0 + (rng() % 5)), 0.3, -0.7};

    double ours = mvgp_log_likelihood(p, sigma, mean, cycles);
    Vector grid = Vector::LinSpaced(t, 1.0, static_cast<double>(t));
    Matrix kprime = mvgp_kernel_matrix(p.kernel(), grid, p.noise_var());
    double theirs = 0;
    for (const auto& r : cycles) theirs += oracle::mvn_matrix_log_density(r, mean, kprime, sigma);
    CHECK(ours == doctest::Approx(theirs).epsilon(1e-9));
  }
}

TEST_CASE("scaling deviations scales the trace term quadratically") {
  auto cycles = random_cycles(3, 5, 2, 31);
  Matrix mean = empirical_mean(cycles);
  Matrix sigma = random_spd(2, 8);
  MvgpParams p{1.0, 0.2, -0.5};

  const double ll1 = mvgp_log_likelihood(p, sigma, mean, cycles);
  std::vector<Matrix> doubled;
  for (const auto& r : cycles) doubled.push_back(mean + 2.0 * (r - mean));
  const double ll2 = mvgp_log_likelihood(p, sigma, mean, doubled);
  // ll = const - trace/2; doubling deviations multiplies the trace by 4.
  Vector grid = Vector::LinSpaced(5, 1.0, 5.0);
  Matrix kprime = mvgp_kernel_matrix(p.kernel(), grid, p.noise_var());
  Eigen::LDLT<Matrix> kl(kprime), sl(sigma);
  double trace = 0;
  for (const auto& r : cycles) {
    Matrix d = r - mean;
    trace += (sl.solve(d.transpose()).array() * kl.solve(d).transpose().array()).sum();
  }
  CHECK(ll1 - ll2 == doctest::Approx(1.5 * trace).epsilon(1e-8));
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 6; ++rep) {
    const Eigen::Index t = 3 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::Index j = 1 + static_cast<Eigen::Index>(rng() % 3);
    auto cycles = random_cycles(2 + rng() % 2, t, j, rng());
    Matrix mean = empirical_mean(cycles);
    Matrix sigma = random_spd(j, rng());
    MvgpParams p{0.5, 0.1, -0.6};

    Eigen::Vector3d g = mvgp_grad_log_likelihood(p, sigma, mean, cycles);
    const double h = 1e-5;
    for (int k = 0; k < 3; ++k) {
      MvgpParams hi = p, lo = p;
      double* fields_hi[3] = {&hi.log_ell, &hi.log_sigma_s, &hi.log_sigma};
      double* fields_lo[3] = {&lo.log_ell, &lo.log_sigma_s, &lo.log_sigma};
      *fields_hi[k] += h;
      *fields_lo[k] -= h;
      const double fd = (mvgp_log_likelihood(hi, sigma, mean, cycles) -
                         mvgp_log_likelihood(lo, sigma, mean, cycles)) /
                        (2 * h);
      CHECK(g(k) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("fit recovers the length scale within x1.5 and improves likelihood") {
  Matrix sigma_true = random_spd(3, 4);
  auto cycles = sample_mvgp(20, 100, 3, 10.0, 1.0, 0.1, sigma_true, 11);
  MvgpFitOptions opts;
  MvgpModel model = mvgp_fit(cycles, opts);
  CHECK(model.kernel.length_scale >= 10.0 / 1.5);
  CHECK(model.kernel.length_scale <= 10.0 * 1.5);

  // The optimized likelihood beats the default initialization.
  MvgpParams init{std::log(10.0), std::log(1.0), std::log(1.0 / 3.0)};
  double ll0 = mvgp_log_likelihood(init, model.output_cov, model.mean_curve, cycles);
  CHECK(model.final_log_likelihood >= ll0 - 1e-9);
}

TEST_CASE("degenerate zero-variance residuals give a flagged floored model") {
  Matrix c = Matrix::Random(6, 2);
  MvgpModel model = mvgp_fit({c, c, c});
  CHECK(model.degenerate);
  CHECK(model.noise_var > 0);
  Eigen::LLT<Matrix> llt(model.output_cov);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("predict: nominal-prior mode returns the mean curve exactly") {
  auto cycles = sample_mvgp(4, 30, 2, 5.0, 1.0, 0.2, random_spd(2, 2), 3);
  MvgpModel model = mvgp_fit(cycles);
  for (double t : {1.0, 7.0, 30.0}) {
    PredictiveDist d = mvgp_predict(model, t);
    Eigen::Index row = static_cast<Eigen::Index>(t) - 1;
    CHECK((d.mean - model.mean_curve.row(row).transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(d.scale >= 0);
    const double k_diag = model.kernel.sigma_s * model.kernel.sigma_s + model.noise_var;
    CHECK(d.scale <= k_diag * (1 + 1e-6) + 1e-12);
  }
}

TEST_CASE("predictive scale stays within [0, prior variance]") {
  MvgpModel model;
  model.mean_curve = Matrix::Zero(10, 2);
  model.kernel = {0.8, 1.5};
  model.noise_var = 0.04;
  model.output_cov = Matrix::Identity(2, 2);
  model.train_grid = Vector::LinSpaced(10, 1.0, 10.0);
  model.conditioning = model.mean_curve;
  model.replication_count = 1;
  model.refresh_cache();
  const double prior = se_kernel(model.kernel, 0, 0) + model.noise_var +
                       1e-8 * model.kernel.sigma_s * model.kernel.sigma_s;
  for (double t = 1; t <= 10; ++t) {
    PredictiveDist d = mvgp_predict(model, t);
    CHECK(d.scale >= 0);
    CHECK(d.scale <= prior + 1e-12);
  }
  // Vanishing cross-covariance limit of the same formula: with the kernel
  // correlation suppressed the scale reverts to the full prior variance.
  Vector zero_cross = Vector::Zero(10);
  const double omega_far = prior - zero_cross.dot(model.kprime_llt.solve(zero_cross));
  CHECK(omega_far == doctest::Approx(prior).epsilon(1e-14));
  // Off-grid queries snap to the nearest training index.
  PredictiveDist snapped = mvgp_predict(model, 25.0);
  PredictiveDist edge = mvgp_predict(model, 10.0);
  CHECK(snapped.scale == doctest::Approx(edge.scale).epsilon(1e-12));
}

TEST_CASE("predict matches the dense Kronecker conditioning oracle") {
  std::mt19937_64 rng(123);
  for (int rep = 0; rep < 6; ++rep) {
    const Eigen::Index t = 4 + static_cast<Eigen::Index>(rng() % 7);  // <= 10
    const Eigen::Index j = 1 + static_cast<Eigen::Index>(rng() % 3);  // <= 3
    MvgpModel model;
    model.mean_curve = Matrix::Random(t, j);
    model.kernel = {0.7 + 0.1 * static_cast<double>(rng() % 5), 2.0};
    model.noise_var = 0.05;
    model.output_cov = random_spd(j, rng());
    model.train_grid = Vector::LinSpaced(t, 1.0, static_cast<double>(t));
    model.conditioning = model.mean_curve + 0.3 * Matrix::Random(t, j);
    model.replication_count = 1;
    model.mode = MvgpMode::kNominalPrior;
    model.refresh_cache();

    for (double tstar = 1; tstar <= static_cast<double>(t); ++tstar) {
      PredictiveDist d = mvgp_predict(model, tstar);

      // Dense oracle: joint Gaussian over (train rows, star row) per column
      // covariance Sigma and row covariance blocks.
      Vector kstar(t);
      for (Eigen::Index i = 0; i < t; ++i)
        kstar(i) = se_kernel(model.kernel, model.train_grid(i), tstar);
      const double kss = se_kernel(model.kernel, tstar, tstar) + model.noise_var +
                         1e-8 * model.kernel.sigma_s * model.kernel.sigma_s;
      Matrix caa = kss * model.output_cov;                      // star block, J x J
      Matrix cab = oracle::kron(model.output_cov, kstar.transpose());  // J x TJ
      Matrix cbb = oracle::kron(model.output_cov, model.kprime);
      Eigen::Index row = static_cast<Eigen::Index>(tstar) - 1;
      oracle::Conditional cond = oracle::gauss_condition(
          model.mean_curve.row(row).transpose(), oracle::vec(model.mean_curve), caa, cab, cbb,
          oracle::vec(model.conditioning));
      CHECK((d.mean - cond.mean).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((d.covariance() - cond.cov).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("replication-averaged conditioning differs only by the noise term") {
  auto cycles = sample_mvgp(4, 20, 2, 4.0, 1.0, 0.3, random_spd(2, 9), 21);
  MvgpFitOptions opts;
  opts.mode = MvgpMode::kReplicationAveraged;
  MvgpModel model = mvgp_fit(cycles, opts);
  model.conditioning = empirical_mean(cycles);
  model.refresh_cache();

  // Doubling N with identical content changes only sigma^2/N on the diagonal.
  MvgpModel doubled = model;
  doubled.replication_count = 2 * model.replication_count;
  doubled.refresh_cache();
  Matrix diff = model.kprime - doubled.kprime;
  Matrix expected = (model.noise_var / static_cast<double>(model.replication_count) -
                     model.noise_var / static_cast<double>(doubled.replication_count)) *
                    Matrix::Identity(20, 20);
  CHECK((diff - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("predictive samples have chi-squared Mahalanobis moments") {
  const Eigen::Index j = 3;
  Matrix sigma = random_spd(j, 14);
  auto cycles = sample_mvgp(6, 40, j, 6.0, 1.0, 0.2, sigma, 15);
  MvgpModel model = mvgp_fit(cycles);
  PredictiveDist d = mvgp_predict(model, 17.0);
  Eigen::LLT<Matrix> sl(Matrix(d.covariance()));
  Matrix l = sl.matrixL();

  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0, 1);
  const int n_samples = 20000;
  double mean_g = 0;
  for (int i = 0; i < n_samples; ++i) {
    Vector z(j);
    for (Eigen::Index a = 0; a < j; ++a) z(a) = gauss(rng);
    Vector r = d.mean + l * z;
    mean_g += mahalanobis(r, d.mean, d.scale, d.output_cov);
  }
  mean_g /= n_samples;
  const double tol = 3.0 * std::sqrt(2.0 * static_cast<double>(j) / n_samples);
  CHECK(std::abs(mean_g - static_cast<double>(j)) <= tol);
}

TEST_CASE("mvgp model save/load round-trip") {
  auto cycles = sample_mvgp(3, 15, 2, 3.0, 0.8, 0.2, random_spd(2, 5), 44);
  MvgpModel model = mvgp_fit(cycles);
  const std::string dir = "test_mvgp_model";
  mvgp_save(model, dir, "runid");
  MvgpModel back = mvgp_load(dir);
  CHECK(back.mean_curve == model.mean_curve);
  CHECK(back.output_cov == model.output_cov);
  CHECK(back.kernel.sigma_s == model.kernel.sigma_s);
  CHECK(back.kernel.length_scale == model.kernel.length_scale);
  CHECK(back.noise_var == model.noise_var);
  PredictiveDist a = mvgp_predict(model, 7.0), b = mvgp_predict(back, 7.0);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(a.scale == doctest::Approx(b.scale).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}
