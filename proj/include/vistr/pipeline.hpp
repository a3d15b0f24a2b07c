#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vistr/detector.hpp"
#include "vistr/mvgp.hpp"
#include "vistr/sim.hpp"
#include "vistr/tr.hpp"

namespace vistr {

/// Full pipeline configuration; every command is a pure function of
/// (config, dataset, seed).
struct RunConfig {
  std::string dataset_dir = "dataset";
  std::string models_dir = "models";
  std::string reports_dir = "reports";

  // Simulation.
  ArmSpec arm;
  std::size_t frames = 240;
  std::size_t nominal_cycles = 8;
  double encoder_noise_deg = 0.05;
  std::vector<double> severities_cm = {0.2, 0.5, 1.0, 5.0};
  std::size_t attack_replications = 3;
  std::size_t attack_onset = 121;  // 1-based t*
  std::size_t ramp_frames = 10;
  std::size_t replay_shift = 0;  // 0 = one full cycle
  std::size_t holdout_cycles = 2;

  // Fitting.
  TrainConfig train;
  MvgpFitOptions mvgp;

  // Detection.
  double alpha = 0.005;
  ResidualModelKind mode = ResidualModelKind::kMvgp;

  std::uint64_t seed = 1;

  /// Stable content hash used as the provenance run id.
  std::string hash() const;
};

extern const char* kVersion;

void cmd_simulate(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
DetectionReport cmd_detect(const RunConfig& cfg, const std::string& cycle_id);

struct BenchRow {
  std::string method;
  double severity_cm = 0;
  std::optional<double> mean_delay;  // over detected replications
  std::size_t no_detection = 0;
  double mean_alarm_frequency = 0;
};

struct BenchSummary {
  std::vector<BenchRow> rows;
  // Nominal hold-out fit quality per method.
  double mvgp_nll = 0, mvgp_log_vol = 0, mvgp_far = 0;
  double iid_nll = 0, iid_log_vol = 0, iid_far = 0;
};

BenchSummary cmd_bench(const RunConfig& cfg);

/// Render a bench or detection report JSON file as aligned text.
std::string cmd_report(const std::string& json_path);

std::string bench_to_text(const BenchSummary& s);
void bench_save(const BenchSummary& s, const RunConfig& cfg, const std::string& json_path,
                const std::string& text_path);

}  // namespace vistr
