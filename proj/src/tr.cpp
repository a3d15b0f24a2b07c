#include "vistr/tr.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "vistr/tucker.hpp"

namespace vistr {

namespace {

using nlohmann::json;

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Convergence ratio with the 0/0 -> 0 convention.
double delta_ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

void check_orthonormal(const Matrix& u, const char* name) {
  Matrix g = u.transpose() * u;
  g.diagonal().array() -= 1.0;
  if (max_abs(g) > 1e-8)
    throw NumericalError(std::string("factor ") + name + " lost column orthonormality");
}

Matrix solve_normal_equations(const Matrix& gram, const Matrix& rhs, double ridge,
                              const char* step) {
  if (gram.norm() == 0.0)
    throw NumericalError(std::string("singular normal equations (zero regressor) in ") + step);
  Matrix g = gram;
  g.diagonal().array() += ridge;
  if (ridge == 0.0) {
    Eigen::FullPivLU<Matrix> lu(g);
    if (!lu.isInvertible())
      throw NumericalError(std::string("singular normal equations in ") + step);
    return lu.solve(rhs);
  }
  return g.ldlt().solve(rhs);
}

}  // namespace

TrFitResult tr_fit(const std::vector<DenseTensor>& mask_cycles,
                   const std::vector<Matrix>& angle_cycles, const TrainConfig& cfg) {
  const std::size_t n_rep = mask_cycles.size();
  if (n_rep < 1 || angle_cycles.size() != n_rep)
    throw DataError("tr_fit: need N >= 1 mask/angle cycle pairs");
  if (mask_cycles[0].order() != 3) throw DataError("tr_fit: mask cycles must be T x H x W");
  const std::size_t T = mask_cycles[0].dim(0);
  const std::size_t H = mask_cycles[0].dim(1);
  const std::size_t W = mask_cycles[0].dim(2);
  const Eigen::Index J = angle_cycles[0].cols();
  for (std::size_t i = 0; i < n_rep; ++i) {
    if (mask_cycles[i].dims() != std::vector<std::size_t>{T, H, W})
      throw DataError("tr_fit: inconsistent mask cycle shapes at cycle " + std::to_string(i));
    if (static_cast<std::size_t>(angle_cycles[i].rows()) != T || angle_cycles[i].cols() != J)
      throw DataError("tr_fit: inconsistent angle cycle shapes at cycle " + std::to_string(i));
    const double* p = mask_cycles[i].data();
    for (std::size_t k = 0; k < mask_cycles[i].size(); ++k)
      if (!std::isfinite(p[k]))
        throw DataError("tr_fit: non-finite mask entry in cycle " + std::to_string(i));
  }
  if (!(cfg.als_tolerance > 0)) throw ConfigError("als_tolerance must be > 0");
  if (cfg.ridge < 0) throw ConfigError("ridge must be >= 0");
  if (cfg.rank_p > H || cfg.rank_q > W) throw ConfigError("ranks must satisfy P <= H, Q <= W");

  // Stack replications into Y in R^{N x T x H x W}.
  DenseTensor y({n_rep, T, H, W});
  for (std::size_t i = 0; i < n_rep; ++i) {
    std::copy(mask_cycles[i].data(), mask_cycles[i].data() + mask_cycles[i].size(),
              y.data() + i * T * H * W);
  }

  // Tucker compression: replication and time modes stay full rank.
  std::vector<ModeSpec> spec(4, ModeSpec::full());
  spec[2] = cfg.rank_p > 0 ? ModeSpec::of_rank(cfg.rank_p) : ModeSpec::of_energy(cfg.energy_tau);
  spec[3] = cfg.rank_q > 0 ? ModeSpec::of_rank(cfg.rank_q) : ModeSpec::of_energy(cfg.energy_tau);
  TuckerFactors tf = hosvd(y, spec);
  const Matrix& u_h = tf.factors[2];
  const Matrix& u_w = tf.factors[3];
  check_orthonormal(u_h, "U_h");
  check_orthonormal(u_w, "U_w");
  const Eigen::Index P = u_h.cols();
  const Eigen::Index Q = u_w.cols();

  DenseTensor v = mode_mul(mode_mul(tf.core, tf.factors[0], 0), tf.factors[1], 1);

  // Per-frame compressed regressors V_it in R^{P x Q}.
  const std::size_t frames = n_rep * T;
  std::vector<Matrix> v_it(frames, Matrix(P, Q));
  for (std::size_t i = 0; i < n_rep; ++i)
    for (std::size_t t = 0; t < T; ++t) {
      Matrix& m = v_it[i * T + t];
      for (Eigen::Index p = 0; p < P; ++p)
        for (Eigen::Index q = 0; q < Q; ++q)
          m(p, q) = v.at({i, t, static_cast<std::size_t>(p), static_cast<std::size_t>(q)});
    }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix c_h(J, P);
  for (Eigen::Index r = 0; r < J; ++r)
    for (Eigen::Index c = 0; c < P; ++c) c_h(r, c) = gauss(rng);
  Vector c_w(Q);
  for (Eigen::Index q = 0; q < Q; ++q) c_w(q) = gauss(rng);

  auto objective = [&]() {
    double s = 0;
    for (std::size_t i = 0; i < n_rep; ++i)
      for (std::size_t t = 0; t < T; ++t) {
        Vector pred = c_h * (v_it[i * T + t] * c_w);
        s += (angle_cycles[i].row(static_cast<Eigen::Index>(t)).transpose() - pred).squaredNorm();
      }
    return 0.5 * s;
  };

  FitTrace trace;
  trace.rank_p = static_cast<std::size_t>(P);
  trace.rank_q = static_cast<std::size_t>(Q);

  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    // Height-basis update: regressors V_it * c_w in R^P.
    Matrix gram_h = Matrix::Zero(P, P);
    Matrix rhs_h = Matrix::Zero(P, J);
    for (std::size_t i = 0; i < n_rep; ++i)
      for (std::size_t t = 0; t < T; ++t) {
        Vector reg = v_it[i * T + t] * c_w;
        gram_h.noalias() += reg * reg.transpose();
        rhs_h.noalias() += reg * angle_cycles[i].row(static_cast<Eigen::Index>(t));
      }
    Matrix c_h_new =
        solve_normal_equations(gram_h, rhs_h, cfg.ridge, "height-basis update").transpose();

    // Width-basis update: regressors C_h * V_it in R^{J x Q}.
    Matrix gram_w = Matrix::Zero(Q, Q);
    Vector rhs_w = Vector::Zero(Q);
    for (std::size_t i = 0; i < n_rep; ++i)
      for (std::size_t t = 0; t < T; ++t) {
        Matrix reg = c_h_new * v_it[i * T + t];
        gram_w.noalias() += reg.transpose() * reg;
        rhs_w.noalias() += reg.transpose() *
                           angle_cycles[i].row(static_cast<Eigen::Index>(t)).transpose();
      }
    Vector c_w_new =
        solve_normal_equations(gram_w, rhs_w, cfg.ridge, "width-basis update").col(0);

    const double dh = delta_ratio(max_abs(Matrix(c_h_new - c_h)), max_abs(c_h_new));
    const double dw = delta_ratio(max_abs(Vector(c_w_new - c_w)), max_abs(c_w_new));
    c_h = std::move(c_h_new);
    c_w = std::move(c_w_new);

    trace.objective.push_back(objective());
    trace.delta_h.push_back(dh);
    trace.delta_w.push_back(dw);
    trace.iterations = iter + 1;
    if (std::max(dh, dw) < cfg.als_tolerance) {
      trace.converged = true;
      break;
    }
  }

  TrFitResult out;
  out.model.b_h = c_h * u_h.transpose();
  out.model.b_w = u_w * c_w;
  out.trace = std::move(trace);
  return out;
}

Vector tr_predict(const TrModel& m, const Matrix& mask) {
  if (mask.rows() != m.height() || mask.cols() != m.width())
    throw DataError("tr_predict: mask shape mismatch");
  return m.b_h * (mask * m.b_w);
}

Vector tr_residual(const TrModel& m, const Vector& reported, const Matrix& mask) {
  if (reported.size() != m.joints()) throw DataError("tr_residual: reported length mismatch");
  return reported - tr_predict(m, mask);
}

AccuracyReport tr_accuracy(const TrModel& m, const std::vector<DenseTensor>& mask_cycles,
                           const std::vector<Matrix>& angle_cycles) {
  if (mask_cycles.empty() || mask_cycles.size() != angle_cycles.size())
    throw DataError("tr_accuracy: need >= 1 mask/angle cycle pair");
  const Eigen::Index J = m.joints();
  Vector sq = Vector::Zero(J);
  Vector ab = Vector::Zero(J);
  std::size_t frames = 0;
  for (std::size_t i = 0; i < mask_cycles.size(); ++i) {
    const std::size_t T = mask_cycles[i].dim(0);
    const std::size_t H = mask_cycles[i].dim(1);
    const std::size_t W = mask_cycles[i].dim(2);
    Matrix mask(H, W);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) mask(r, c) = mask_cycles[i].at({t, r, c});
      Vector err = angle_cycles[i].row(static_cast<Eigen::Index>(t)).transpose() -
                   tr_predict(m, mask);
      sq += err.cwiseAbs2();
      ab += err.cwiseAbs();
      ++frames;
    }
  }
  AccuracyReport rep;
  rep.rmse_per_joint = (sq / static_cast<double>(frames)).cwiseSqrt();
  rep.mae_per_joint = ab / static_cast<double>(frames);
  rep.rmse_avg = rep.rmse_per_joint.mean();
  rep.mae_avg = rep.mae_per_joint.mean();
  return rep;
}

void tr_save(const TrModel& m, const TrainConfig& cfg, const std::string& dir,
             const std::string& run_id) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["J"] = m.joints();
  manifest["H"] = m.height();
  manifest["W"] = m.width();
  manifest["created"] = run_id;
  manifest["config"] = {{"rank_p", cfg.rank_p},        {"rank_q", cfg.rank_q},
                        {"energy_tau", cfg.energy_tau}, {"als_tolerance", cfg.als_tolerance},
                        {"max_iterations", cfg.max_iterations}, {"ridge", cfg.ridge},
                        {"seed", cfg.seed}};
  std::ofstream f(fs::path(dir) / "tr.json");
  f << manifest.dump(2) << "\n";
  write_ten_matrix((fs::path(dir) / "tr_bh.ten").string(), m.b_h);
  write_ten_vector((fs::path(dir) / "tr_bw.ten").string(), m.b_w);
}

TrModel tr_load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "tr.json");
  if (!f) throw DataError("missing TR model manifest in " + dir);
  json manifest = json::parse(f);
  TrModel m;
  m.b_h = read_ten_matrix((fs::path(dir) / "tr_bh.ten").string());
  m.b_w = read_ten_vector((fs::path(dir) / "tr_bw.ten").string());
  if (m.joints() != manifest.at("J").get<Eigen::Index>() ||
      m.height() != manifest.at("H").get<Eigen::Index>() ||
      m.width() != manifest.at("W").get<Eigen::Index>())
    throw DataError("TR model manifest/payload shape mismatch in " + dir);
  return m;
}

void trace_save(const FitTrace& trace, const std::string& path) {
  json j;
  j["objective"] = trace.objective;
  j["delta_h"] = trace.delta_h;
  j["delta_w"] = trace.delta_w;
  j["iterations"] = trace.iterations;
  j["converged"] = trace.converged;
  j["rank_p"] = trace.rank_p;
  j["rank_q"] = trace.rank_q;
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

}  // namespace vistr
