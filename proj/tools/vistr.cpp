#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vistr/log.hpp"
#include "vistr/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Work-cell replay-attack detection pipeline"};
  app.set_config("--config", "", "TOML config file; flags win over file values");
  app.fallthrough();

  vistr::RunConfig cfg;
  std::string mode = "mvgp";
  std::string mvgp_mode = "nominal_prior";

  app.add_option("--seed", cfg.seed, "Master seed for all stages");
  app.add_option("--alpha", cfg.alpha, "Per-frame significance level");
  app.add_option("--mode", mode, "Residual model: mvgp | iid")
      ->check(CLI::IsMember({"mvgp", "iid"}));
  app.add_option("--dataset", cfg.dataset_dir, "Dataset directory");
  app.add_option("--models", cfg.models_dir, "Models directory");
  app.add_option("--reports", cfg.reports_dir, "Reports directory");
  app.add_option("--frames", cfg.frames, "Frames per cycle");
  app.add_option("--nominal-cycles", cfg.nominal_cycles, "Nominal replications");
  app.add_option("--encoder-noise", cfg.encoder_noise_deg, "Encoder noise std, degrees");
  app.add_option("--severities", cfg.severities_cm, "Attack severities in cm");
  app.add_option("--attack-replications", cfg.attack_replications,
                 "Attacked cycles per severity");
  app.add_option("--attack-onset", cfg.attack_onset, "1-based attack onset frame");
  app.add_option("--ramp-frames", cfg.ramp_frames, "Attack onset ramp length");
  app.add_option("--replay-shift", cfg.replay_shift, "Replay shift in frames (0 = full cycle)");
  app.add_option("--holdout-cycles", cfg.holdout_cycles, "Fresh nominal hold-out cycles");
  app.add_option("--energy-tau", cfg.train.energy_tau, "Tucker energy target per spatial mode");
  app.add_option("--rank-p", cfg.train.rank_p, "Explicit height rank (0 = energy target)");
  app.add_option("--rank-q", cfg.train.rank_q, "Explicit width rank (0 = energy target)");
  app.add_option("--als-tolerance", cfg.train.als_tolerance, "ALS convergence tolerance");
  app.add_option("--als-max-iterations", cfg.train.max_iterations, "ALS iteration cap");
  app.add_option("--ridge", cfg.train.ridge, "Ridge added to normal equations");
  app.add_option("--mvgp-starts", cfg.mvgp.starts, "MVGP multi-start count");
  app.add_option("--mvgp-max-iterations", cfg.mvgp.max_iterations, "MVGP iteration cap");
  app.add_option("--mvgp-mode", mvgp_mode, "Conditioning rule")
      ->check(CLI::IsMember({"nominal_prior", "replication_averaged"}));

  std::string out_override;
  app.add_option("--out", out_override, "Output directory for the invoked stage");

  auto* sim = app.add_subcommand("simulate", "Generate the synthetic work-cell dataset");
  auto* fit = app.add_subcommand("fit", "Fit estimator and residual models");
  auto* detect = app.add_subcommand("detect", "Stream one cycle through the detector");
  std::string cycle_id;
  detect->add_option("--cycle", cycle_id, "Cycle id to stream")->required();
  auto* bench = app.add_subcommand("bench", "Run the full severity bench");
  auto* report = app.add_subcommand("report", "Render a report JSON as text");
  std::string report_path;
  report->add_option("path", report_path, "Report or bench JSON file")->required();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  cfg.mode = mode == "mvgp" ? vistr::ResidualModelKind::kMvgp : vistr::ResidualModelKind::kIid;
  cfg.mvgp.mode = mvgp_mode == "nominal_prior" ? vistr::MvgpMode::kNominalPrior
                                               : vistr::MvgpMode::kReplicationAveraged;
  cfg.train.seed = cfg.seed;
  cfg.mvgp.seed = cfg.seed;

  try {
    if (sim->parsed()) {
      if (!out_override.empty()) cfg.dataset_dir = out_override;
      vistr::cmd_simulate(cfg);
    } else if (fit->parsed()) {
      if (!out_override.empty()) cfg.models_dir = out_override;
      vistr::cmd_fit(cfg);
    } else if (detect->parsed()) {
      if (!out_override.empty()) cfg.reports_dir = out_override;
      vistr::DetectionReport rep = vistr::cmd_detect(cfg, cycle_id);
      std::printf("cycle %s: false_alarm_rate=%.5f", cycle_id.c_str(), rep.false_alarm_rate);
      if (rep.onset) {
        if (rep.detection_delay)
          std::printf(" detection_delay=%zu", *rep.detection_delay);
        else
          std::printf(" detection_delay=none");
        std::printf(" alarm_frequency=%.4f", rep.alarm_frequency);
      }
      std::printf("\n");
    } else if (bench->parsed()) {
      if (!out_override.empty()) cfg.reports_dir = out_override;
      vistr::BenchSummary s = vistr::cmd_bench(cfg);
      std::fputs(vistr::bench_to_text(s).c_str(), stdout);
    } else if (report->parsed()) {
      std::fputs(vistr::cmd_report(report_path).c_str(), stdout);
    }
  } catch (const vistr::ConfigError& e) {
    vistr::log_error(e.what());
    return kExitConfig;
  } catch (const vistr::DataError& e) {
    vistr::log_error(e.what());
    return kExitData;
  } catch (const vistr::NumericalError& e) {
    vistr::log_error(e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    vistr::log_error(e.what());
    return 1;
  }
  return kExitOk;
}
