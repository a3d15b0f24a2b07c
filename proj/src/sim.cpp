#include "vistr/sim.hpp"

#include <cmath>
#include <random>

namespace vistr {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

double point_segment_dist(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

double ArmSpec::reach_cm() const {
  double r = 0;
  for (double l : link_lengths_cm) r += l;
  return r;
}

void ArmSpec::validate() const {
  if (joint_count < 1 || link_lengths_cm.size() != joint_count)
    throw ConfigError("arm: need one positive link length per joint");
  for (double l : link_lengths_cm)
    if (l < 0) throw ConfigError("arm: link lengths must be >= 0");
  if (!(link_thickness_cm > 0) || !(pixels_per_cm > 0))
    throw ConfigError("arm: thickness and pixels_per_cm must be positive");
  const double w_cm = static_cast<double>(image_width) / pixels_per_cm;
  const double h_cm = static_cast<double>(image_height) / pixels_per_cm;
  const double margin = std::min({base_x_cm, base_y_cm, w_cm - base_x_cm, h_cm - base_y_cm});
  if (margin < reach_cm() + link_thickness_cm)
    throw ConfigError("arm: reach plus thickness margin does not fit the frame");
}

Matrix gen_trajectory(const ArmSpec& arm, std::size_t frames, std::uint64_t seed,
                      double slew_limit_deg_per_frame) {
  if (frames < 2) throw ConfigError("gen_trajectory: need T >= 2");
  arm.validate();
  const std::size_t J = arm.joint_count;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_harm(2, 4);
  std::uniform_real_distribution<double> amp(8.0, 20.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);

  // Bent rest posture: keeps the Jacobian well conditioned everywhere, so the
  // attack perturbation solver converges in a few Newton steps.
  Vector rest(static_cast<Eigen::Index>(J));
  for (std::size_t j = 0; j < J; ++j)
    rest(static_cast<Eigen::Index>(j)) = j == 0 ? 100.0 : -22.0;

  Matrix traj = Matrix::Zero(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(J));
  for (std::size_t j = 0; j < J; ++j) {
    const int k_max = n_harm(rng);
    const double base_amp = amp(rng);
    std::vector<double> amps, phases;
    for (int k = 1; k <= k_max; ++k) {
      amps.push_back(base_amp / static_cast<double>(k));
      phases.push_back(phase(rng));
    }
    for (std::size_t t = 0; t < frames; ++t) {
      double a = 0;
      for (int k = 1; k <= k_max; ++k)
        a += amps[static_cast<std::size_t>(k - 1)] *
             std::sin(2.0 * M_PI * k * static_cast<double>(t) / static_cast<double>(frames) +
                      phases[static_cast<std::size_t>(k - 1)]);
      traj(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = a;
    }
  }

  // Enforce the slew limit, wrap step included, by uniform rescaling.
  double max_step = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const Eigen::Index t0 = static_cast<Eigen::Index>(t);
    const Eigen::Index t1 = static_cast<Eigen::Index>((t + 1) % frames);
    max_step = std::max(max_step, (traj.row(t1) - traj.row(t0)).cwiseAbs().maxCoeff());
  }
  if (max_step > 0.9 * slew_limit_deg_per_frame)
    traj *= 0.9 * slew_limit_deg_per_frame / max_step;
  traj.rowwise() += rest.transpose();
  return traj;
}

std::vector<Eigen::Vector2d> forward_kinematics(const Vector& angles_deg, const ArmSpec& arm) {
  if (static_cast<std::size_t>(angles_deg.size()) != arm.joint_count)
    throw DataError("forward_kinematics: angle count mismatch");
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(arm.joint_count + 1);
  Eigen::Vector2d p(arm.base_x_cm, arm.base_y_cm);
  pts.push_back(p);
  double phi = 0;
  for (std::size_t i = 0; i < arm.joint_count; ++i) {
    phi += angles_deg(static_cast<Eigen::Index>(i)) * kDegToRad;
    p += arm.link_lengths_cm[i] * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    pts.push_back(p);
  }
  return pts;
}

Matrix ee_jacobian(const Vector& angles_deg, const ArmSpec& arm) {
  const auto pts = forward_kinematics(angles_deg, arm);
  const Eigen::Vector2d& ee = pts.back();
  Matrix jac(2, static_cast<Eigen::Index>(arm.joint_count));
  for (std::size_t j = 0; j < arm.joint_count; ++j) {
    // Rotating joint j sweeps the sub-chain from joint j's pivot.
    const Eigen::Vector2d r = ee - pts[j];
    jac(0, static_cast<Eigen::Index>(j)) = -r.y();
    jac(1, static_cast<Eigen::Index>(j)) = r.x();
  }
  return jac;
}

Matrix render_mask(const Vector& angles_deg, const ArmSpec& arm, long frame_index) {
  arm.validate();
  const auto pts = forward_kinematics(angles_deg, arm);
  const double radius = 0.5 * arm.link_thickness_cm;
  const double w_cm = static_cast<double>(arm.image_width) / arm.pixels_per_cm;
  const double h_cm = static_cast<double>(arm.image_height) / arm.pixels_per_cm;
  for (const auto& p : pts) {
    if (p.x() - radius < 0 || p.x() + radius > w_cm || p.y() - radius < 0 ||
        p.y() + radius > h_cm) {
      std::string where = frame_index >= 0 ? " at frame " + std::to_string(frame_index) : "";
      throw DataError("render_mask: arm leaves the frame" + where);
    }
  }

  const Eigen::Index H = static_cast<Eigen::Index>(arm.image_height);
  const Eigen::Index W = static_cast<Eigen::Index>(arm.image_width);
  Matrix mask = Matrix::Zero(H, W);
  const double ppcm = arm.pixels_per_cm;

  auto paint_capsule = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const double x_lo = std::min(a.x(), b.x()) - radius;
    const double x_hi = std::max(a.x(), b.x()) + radius;
    const double y_lo = std::min(a.y(), b.y()) - radius;
    const double y_hi = std::max(a.y(), b.y()) + radius;
    const Eigen::Index c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(x_lo * ppcm) - 1);
    const Eigen::Index c1 = std::min<Eigen::Index>(W - 1, static_cast<Eigen::Index>(x_hi * ppcm) + 1);
    // World y up: row 0 is the top of the image.
    const Eigen::Index r0 =
        std::max<Eigen::Index>(0, static_cast<Eigen::Index>((h_cm - y_hi) * ppcm) - 1);
    const Eigen::Index r1 =
        std::min<Eigen::Index>(H - 1, static_cast<Eigen::Index>((h_cm - y_lo) * ppcm) + 1);
    for (Eigen::Index r = r0; r <= r1; ++r)
      for (Eigen::Index c = c0; c <= c1; ++c) {
        const Eigen::Vector2d p((static_cast<double>(c) + 0.5) / ppcm,
                                h_cm - (static_cast<double>(r) + 0.5) / ppcm);
        if (point_segment_dist(p, a, b) <= radius) mask(r, c) = 1.0;
      }
  };

  paint_capsule(pts[0], pts[0]);  // base disc
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) paint_capsule(pts[i], pts[i + 1]);
  return mask;
}

Vector perturb_for_displacement(const Vector& angles_deg, const ArmSpec& arm, double d_cm,
                                const Eigen::Vector2d& direction) {
  const std::size_t J = arm.joint_count;
  if (d_cm < 0) throw ConfigError("perturb_for_displacement: d must be >= 0");
  if (d_cm == 0) return Vector::Zero(static_cast<Eigen::Index>(J));
  if (d_cm > 0.5 * arm.reach_cm())
    throw ConfigError("perturb_for_displacement: displacement exceeds half the reach");
  const Eigen::Vector2d target = d_cm * direction.normalized();

  auto damped_solve = [&](const Vector& at, const Eigen::Vector2d& rhs) {
    Matrix jac = ee_jacobian(at, arm);
    Matrix jjt = jac * jac.transpose();
    const double scale = jjt.trace();
    if (scale < 1e-12 * arm.reach_cm() * arm.reach_cm())
      throw NumericalError("perturb_for_displacement: singular Jacobian at configuration");
    jjt.diagonal().array() += 1e-10 * scale;
    return Vector(jac.transpose() * jjt.ldlt().solve(rhs));
  };

  const Eigen::Vector2d ee0 = forward_kinematics(angles_deg, arm).back();
  Vector delta_rad = damped_solve(angles_deg, target);
  for (int iter = 0; iter < 5; ++iter) {
    const Vector cand = angles_deg + delta_rad / kDegToRad;
    const Eigen::Vector2d err = target - (forward_kinematics(cand, arm).back() - ee0);
    if (err.norm() <= 0.02 * d_cm) return delta_rad / kDegToRad;
    delta_rad += damped_solve(cand, err);
  }
  const Vector cand = angles_deg + delta_rad / kDegToRad;
  const Eigen::Vector2d err = target - (forward_kinematics(cand, arm).back() - ee0);
  if (err.norm() <= 0.02 * d_cm) return delta_rad / kDegToRad;
  throw NumericalError("perturb_for_displacement: Newton refinement did not reach 2% of d");
}

CycleData gen_nominal_cycle(const ArmSpec& arm, std::size_t frames, std::uint64_t traj_seed,
                            std::uint64_t noise_seed, double encoder_noise_deg,
                            const std::string& id) {
  arm.validate();
  CycleData cycle;
  cycle.id = id;
  cycle.seed = noise_seed;
  cycle.true_angles = gen_trajectory(arm, frames, traj_seed);
  const Eigen::Index T = cycle.true_angles.rows();
  const Eigen::Index J = cycle.true_angles.cols();

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, encoder_noise_deg);
  cycle.reported_angles = cycle.true_angles;
  if (encoder_noise_deg > 0)
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index j = 0; j < J; ++j) cycle.reported_angles(t, j) += noise(rng);

  cycle.masks = DenseTensor({frames, arm.image_height, arm.image_width});
  for (Eigen::Index t = 0; t < T; ++t) {
    Matrix mask = render_mask(cycle.true_angles.row(t).transpose(), arm, t);
    for (std::size_t r = 0; r < arm.image_height; ++r)
      for (std::size_t c = 0; c < arm.image_width; ++c)
        cycle.masks.at({static_cast<std::size_t>(t), r, c}) =
            mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return cycle;
}

CycleData apply_replay_attack(const CycleData& nominal, const CycleData& recorded,
                              const AttackSpec& spec, const ArmSpec& arm) {
  const std::size_t T = nominal.frames();
  if (recorded.frames() != T || recorded.true_angles.cols() != nominal.true_angles.cols())
    throw DataError("apply_replay_attack: nominal/recorded shape mismatch");
  if (spec.onset < 1 || spec.onset > T)
    throw ConfigError("apply_replay_attack: onset must be in [1, T]");
  if (spec.replay_shift > T)
    throw ConfigError("apply_replay_attack: replay shift out of range");
  if (spec.deviation_cm < 0) throw ConfigError("apply_replay_attack: deviation must be >= 0");

  CycleData out = nominal;
  out.attack = spec;
  out.recorded_id = recorded.id;
  const std::size_t onset0 = spec.onset - 1;
  const Eigen::Vector2d down(0.0, -1.0);

  for (std::size_t t = onset0; t < T; ++t) {
    const std::size_t src = (t + T - (spec.replay_shift % T)) % T;
    out.reported_angles.row(static_cast<Eigen::Index>(t)) =
        recorded.reported_angles.row(static_cast<Eigen::Index>(src));
    if (spec.deviation_cm == 0) continue;
    const double ramp =
        spec.ramp_frames == 0
            ? 1.0
            : std::min(1.0, static_cast<double>(t - onset0 + 1) /
                                static_cast<double>(spec.ramp_frames));
    const Vector base = nominal.true_angles.row(static_cast<Eigen::Index>(t)).transpose();
    const Vector delta = perturb_for_displacement(base, arm, spec.deviation_cm * ramp, down);
    out.true_angles.row(static_cast<Eigen::Index>(t)) = (base + delta).transpose();
    Matrix mask =
        render_mask(out.true_angles.row(static_cast<Eigen::Index>(t)).transpose(), arm,
                    static_cast<long>(t));
    for (std::size_t r = 0; r < arm.image_height; ++r)
      for (std::size_t c = 0; c < arm.image_width; ++c)
        out.masks.at({t, r, c}) = mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return out;
}

}  // namespace vistr
