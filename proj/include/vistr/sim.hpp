#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vistr/tensor.hpp"

namespace vistr {

/// Planar arm and camera geometry. World coordinates in cm, x right, y up,
/// origin at the image's bottom-left corner; downward displacement is -y.
struct ArmSpec {
  std::size_t joint_count = 6;
  std::vector<double> link_lengths_cm = {6.0, 5.0, 4.0, 3.0, 2.0, 2.0};
  double link_thickness_cm = 1.6;
  double base_x_cm = 24.0;
  double base_y_cm = 24.0;
  double pixels_per_cm = 2.0;
  std::size_t image_height = 96;
  std::size_t image_width = 96;

  double reach_cm() const;
  /// Throws ConfigError unless the fully extended arm fits the frame with
  /// margin >= link_thickness from every edge.
  void validate() const;
};

struct AttackSpec {
  std::size_t onset = 1;         // 1-based frame t*, attack active for t >= t*
  std::size_t replay_shift = 0;  // frames; 0 or T replays the recorded cycle in phase
  double deviation_cm = 0;       // end-effector downward displacement
  std::size_t ramp_frames = 10;  // linear onset ramp
};

/// One operation cycle: binary masks, true and encoder-reported joint angles.
struct CycleData {
  std::string id;
  DenseTensor masks;       // T x H x W, entries in {0,1}
  Matrix true_angles;      // T x J degrees
  Matrix reported_angles;  // T x J degrees
  std::optional<AttackSpec> attack;
  std::string recorded_id;  // replay source cycle, when attacked
  std::uint64_t seed = 0;

  std::size_t frames() const { return static_cast<std::size_t>(true_angles.rows()); }
};

/// Smooth periodic per-joint trajectories (seeded harmonics), T x J degrees.
/// Rescaled so the max per-frame step (including the wrap) stays within the
/// slew limit.
Matrix gen_trajectory(const ArmSpec& arm, std::size_t frames, std::uint64_t seed,
                      double slew_limit_deg_per_frame = 2.0);

/// Joint positions in cm, base first, end-effector last (J+1 points).
std::vector<Eigen::Vector2d> forward_kinematics(const Vector& angles_deg, const ArmSpec& arm);

/// 2 x J end-effector Jacobian in cm per radian.
Matrix ee_jacobian(const Vector& angles_deg, const ArmSpec& arm);

/// Rasterize the arm as a union of link capsules plus a base disc.
/// frame_index is only used to annotate out-of-frame errors.
Matrix render_mask(const Vector& angles_deg, const ArmSpec& arm, long frame_index = -1);

/// Joint-angle perturbation (degrees) displacing the end-effector by d_cm
/// along the unit direction: damped least squares + Newton refinement to
/// within 2% of d.
Vector perturb_for_displacement(const Vector& angles_deg, const ArmSpec& arm, double d_cm,
                                const Eigen::Vector2d& direction);

/// Nominal cycle: shared true trajectory (traj_seed), per-cycle encoder noise.
CycleData gen_nominal_cycle(const ArmSpec& arm, std::size_t frames, std::uint64_t traj_seed,
                            std::uint64_t noise_seed, double encoder_noise_deg,
                            const std::string& id);

/// Replay attack: from the onset, reported angles come from the recorded
/// nominal stream shifted by replay_shift (mod T) while the true motion is
/// perturbed downward by deviation_cm and masks re-rendered.
CycleData apply_replay_attack(const CycleData& nominal, const CycleData& recorded,
                              const AttackSpec& spec, const ArmSpec& arm);

// --- Dataset directory format -------------------------------------------
// manifest.json {J,T,H,W, arm, cycles:[{id, seed, attack?, recorded_id?}]},
// per-cycle subdirectory with angles.csv (t,true_1..J,reported_1..J),
// frame_%05d.pgm 8-bit 0/255 masks, and a packed masks.ten stack.

struct Dataset {
  ArmSpec arm;
  std::vector<CycleData> cycles;

  const CycleData& cycle(const std::string& id) const;
};

void write_dataset(const std::string& dir, const ArmSpec& arm,
                   const std::vector<CycleData>& cycles);
Dataset read_dataset(const std::string& dir);

/// 8-bit binary PGM (P5), values 0/255.
void write_pgm(const std::string& path, const Matrix& mask01);
Matrix read_pgm(const std::string& path);

}  // namespace vistr
