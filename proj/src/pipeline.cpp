#include "vistr/pipeline.hpp"

#include <cinttypes>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vistr/log.hpp"

namespace vistr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json config_to_json(const RunConfig& cfg) {
  json j;
  j["frames"] = cfg.frames;
  j["nominal_cycles"] = cfg.nominal_cycles;
  j["encoder_noise_deg"] = cfg.encoder_noise_deg;
  j["severities_cm"] = cfg.severities_cm;
  j["attack_replications"] = cfg.attack_replications;
  j["attack_onset"] = cfg.attack_onset;
  j["ramp_frames"] = cfg.ramp_frames;
  j["replay_shift"] = cfg.replay_shift;
  j["holdout_cycles"] = cfg.holdout_cycles;
  j["arm"] = {{"joint_count", cfg.arm.joint_count},
              {"link_lengths_cm", cfg.arm.link_lengths_cm},
              {"link_thickness_cm", cfg.arm.link_thickness_cm},
              {"base_x_cm", cfg.arm.base_x_cm},
              {"base_y_cm", cfg.arm.base_y_cm},
              {"pixels_per_cm", cfg.arm.pixels_per_cm},
              {"image_height", cfg.arm.image_height},
              {"image_width", cfg.arm.image_width}};
  j["train"] = {{"rank_p", cfg.train.rank_p},
                {"rank_q", cfg.train.rank_q},
                {"energy_tau", cfg.train.energy_tau},
                {"als_tolerance", cfg.train.als_tolerance},
                {"max_iterations", cfg.train.max_iterations},
                {"ridge", cfg.train.ridge},
                {"seed", cfg.train.seed}};
  j["mvgp"] = {{"max_iterations", cfg.mvgp.max_iterations},
               {"tolerance", cfg.mvgp.tolerance},
               {"starts", cfg.mvgp.starts},
               {"seed", cfg.mvgp.seed},
               {"mode", cfg.mvgp.mode == MvgpMode::kNominalPrior ? "nominal_prior"
                                                                 : "replication_averaged"}};
  j["alpha"] = cfg.alpha;
  j["mode"] = cfg.mode == ResidualModelKind::kMvgp ? "mvgp" : "iid";
  j["seed"] = cfg.seed;
  return j;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t h = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  return h;
}

std::string two_digit(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02zu", i);
  return buf;
}

std::size_t effective_replay_shift(const RunConfig& cfg) {
  return cfg.replay_shift == 0 ? cfg.frames : cfg.replay_shift;
}

void split_cycles(const Dataset& ds, std::vector<const CycleData*>& nominal,
                  std::vector<const CycleData*>& attacked) {
  for (const auto& c : ds.cycles)
    (c.attack ? attacked : nominal).push_back(&c);
}

Matrix cycle_mask_frame(const CycleData& c, std::size_t t, const ArmSpec& arm) {
  Matrix mask(arm.image_height, arm.image_width);
  for (std::size_t r = 0; r < arm.image_height; ++r)
    for (std::size_t cc = 0; cc < arm.image_width; ++cc)
      mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cc)) = c.masks.at({t, r, cc});
  return mask;
}

std::vector<Matrix> residual_cycles(const TrModel& tr, const std::vector<const CycleData*>& cycles,
                                    const ArmSpec& arm) {
  std::vector<Matrix> out;
  for (const CycleData* c : cycles) {
    const std::size_t T = c->frames();
    Matrix r(static_cast<Eigen::Index>(T), tr.joints());
    for (std::size_t t = 0; t < T; ++t)
      r.row(static_cast<Eigen::Index>(t)) =
          tr_residual(tr, c->reported_angles.row(static_cast<Eigen::Index>(t)).transpose(),
                      cycle_mask_frame(*c, t, arm))
              .transpose();
    out.push_back(std::move(r));
  }
  return out;
}

DetectionReport run_detector(const TrModel& tr, const MvgpModel* mvgp, const IidModel* iid,
                             const DetectorConfig& dcfg, const CycleData& cycle,
                             const ArmSpec& arm) {
  Detector det(tr, mvgp, iid, dcfg);
  const std::size_t T = cycle.frames();
  for (std::size_t t = 0; t < T; ++t)
    det.step(static_cast<double>(t + 1), cycle_mask_frame(cycle, t, arm),
             cycle.reported_angles.row(static_cast<Eigen::Index>(t)).transpose());
  std::optional<std::size_t> onset;
  if (cycle.attack) onset = cycle.attack->onset - 1;
  return det.report(onset);
}

struct LoadedModels {
  TrModel tr;
  MvgpModel mvgp;
  IidModel iid;
};

LoadedModels load_models(const RunConfig& cfg) {
  LoadedModels m;
  m.tr = tr_load(cfg.models_dir);
  m.mvgp = mvgp_load(cfg.models_dir);
  m.iid = iid_load(cfg.models_dir);
  return m;
}

}  // namespace

const char* kVersion = "0.1.0";

std::string RunConfig::hash() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a(config_to_json(*this).dump()));
  return buf;
}

void cmd_simulate(const RunConfig& cfg) {
  cfg.arm.validate();
  for (double s : cfg.severities_cm)
    if (s < 0) throw ConfigError("severities must be >= 0");
  const std::uint64_t traj_seed = mix_seed(cfg.seed, 0xA11);

  std::vector<CycleData> cycles;
  for (std::size_t i = 0; i < cfg.nominal_cycles; ++i)
    cycles.push_back(gen_nominal_cycle(cfg.arm, cfg.frames, traj_seed, mix_seed(cfg.seed, i + 1),
                                       cfg.encoder_noise_deg, "nominal_" + two_digit(i)));
  if (cycles.empty()) throw ConfigError("need at least one nominal cycle");

  const CycleData recorded = cycles.front();  // copy: push_back below reallocates
  for (std::size_t s = 0; s < cfg.severities_cm.size(); ++s) {
    for (std::size_t rep = 0; rep < cfg.attack_replications; ++rep) {
      CycleData victim = gen_nominal_cycle(cfg.arm, cfg.frames, traj_seed,
                                           mix_seed(cfg.seed, 1000 + s * 100 + rep),
                                           cfg.encoder_noise_deg,
                                           "attack_s" + two_digit(s) + "_r" + two_digit(rep));
      AttackSpec spec;
      spec.onset = cfg.attack_onset;
      spec.replay_shift = effective_replay_shift(cfg);
      spec.deviation_cm = cfg.severities_cm[s];
      spec.ramp_frames = cfg.ramp_frames;
      CycleData attacked = apply_replay_attack(victim, recorded, spec, cfg.arm);
      attacked.id = victim.id;
      cycles.push_back(std::move(attacked));
    }
  }
  write_dataset(cfg.dataset_dir, cfg.arm, cycles);
  log_info("simulate: wrote " + std::to_string(cycles.size()) + " cycles to " + cfg.dataset_dir);
}

void cmd_fit(const RunConfig& cfg) {
  if (!fs::exists(fs::path(cfg.dataset_dir) / "manifest.json"))
    throw DataError("dataset not found at " + cfg.dataset_dir);
  Dataset ds = read_dataset(cfg.dataset_dir);
  std::vector<const CycleData*> nominal, attacked;
  split_cycles(ds, nominal, attacked);
  if (nominal.empty()) throw DataError("no nominal cycles in " + cfg.dataset_dir);

  std::vector<DenseTensor> masks;
  std::vector<Matrix> angles;
  for (const CycleData* c : nominal) {
    masks.push_back(c->masks);
    angles.push_back(c->reported_angles);
  }
  TrFitResult fit = tr_fit(masks, angles, cfg.train);
  if (!fit.trace.converged)
    log_warn("fit: ALS hit the iteration cap without meeting the tolerance");

  std::vector<Matrix> residuals = residual_cycles(fit.model, nominal, ds.arm);
  MvgpModel mvgp = mvgp_fit(residuals, cfg.mvgp);
  IidModel iid = fit_iid(residuals);

  const std::string run_id = cfg.hash();
  tr_save(fit.model, cfg.train, cfg.models_dir, run_id);
  trace_save(fit.trace, (fs::path(cfg.models_dir) / "fit_trace.json").string());
  mvgp_save(mvgp, cfg.models_dir, run_id);
  iid_save(iid, cfg.models_dir, run_id);
  log_info("fit: models written to " + cfg.models_dir);
}

DetectionReport cmd_detect(const RunConfig& cfg, const std::string& cycle_id) {
  Dataset ds = read_dataset(cfg.dataset_dir);
  const CycleData& cycle = ds.cycle(cycle_id);
  LoadedModels m = load_models(cfg);
  if (m.tr.height() != static_cast<Eigen::Index>(ds.arm.image_height) ||
      m.tr.width() != static_cast<Eigen::Index>(ds.arm.image_width))
    throw DataError("model/dataset frame shape mismatch");

  DetectorConfig dcfg = DetectorConfig::make(cfg.alpha, static_cast<int>(m.tr.joints()), cfg.mode);
  DetectionReport rep = run_detector(m.tr, &m.mvgp, &m.iid, dcfg, cycle, ds.arm);

  fs::create_directories(cfg.reports_dir);
  const std::string stem =
      "report_" + cycle_id + (cfg.mode == ResidualModelKind::kMvgp ? "_mvgp" : "_iid");
  report_save_json(rep, (fs::path(cfg.reports_dir) / (stem + ".json")).string(), cfg.hash());
  report_save_csv(rep, (fs::path(cfg.reports_dir) / (stem + ".csv")).string());
  return rep;
}

BenchSummary cmd_bench(const RunConfig& cfg) {
  Dataset ds = read_dataset(cfg.dataset_dir);
  LoadedModels m = load_models(cfg);
  std::vector<const CycleData*> nominal, attacked;
  split_cycles(ds, nominal, attacked);
  if (attacked.empty()) throw DataError("bench: no attacked cycles in " + cfg.dataset_dir);

  DetectorConfig mvgp_cfg =
      DetectorConfig::make(cfg.alpha, static_cast<int>(m.tr.joints()), ResidualModelKind::kMvgp);
  DetectorConfig iid_cfg =
      DetectorConfig::make(cfg.alpha, static_cast<int>(m.tr.joints()), ResidualModelKind::kIid);

  BenchSummary out;
  for (double severity : cfg.severities_cm) {
    for (const auto& [name, dcfg] :
         {std::pair<std::string, const DetectorConfig*>{"mvgp", &mvgp_cfg},
          std::pair<std::string, const DetectorConfig*>{"iid", &iid_cfg}}) {
      BenchRow row;
      row.method = name;
      row.severity_cm = severity;
      double delay_sum = 0, freq_sum = 0;
      std::size_t detected = 0, count = 0;
      for (const CycleData* c : attacked) {
        if (!c->attack || c->attack->deviation_cm != severity) continue;
        DetectionReport rep = run_detector(m.tr, &m.mvgp, &m.iid, *dcfg, *c, ds.arm);
        ++count;
        freq_sum += rep.alarm_frequency;
        if (rep.detection_delay) {
          delay_sum += static_cast<double>(*rep.detection_delay);
          ++detected;
        } else {
          ++row.no_detection;
        }
      }
      if (count == 0) continue;
      if (detected > 0) row.mean_delay = delay_sum / static_cast<double>(detected);
      row.mean_alarm_frequency = freq_sum / static_cast<double>(count);
      out.rows.push_back(std::move(row));
    }
  }

  // Fresh nominal hold-out cycles for fit-quality metrics.
  const std::uint64_t traj_seed = mix_seed(cfg.seed, 0xA11);
  double mvgp_nll = 0, mvgp_vol = 0, mvgp_far = 0;
  double iid_nll = 0, iid_vol = 0, iid_far = 0;
  const std::size_t n_hold = std::max<std::size_t>(cfg.holdout_cycles, 1);
  for (std::size_t i = 0; i < n_hold; ++i) {
    CycleData hold = gen_nominal_cycle(cfg.arm, cfg.frames, traj_seed,
                                       mix_seed(cfg.seed, 5000 + i), cfg.encoder_noise_deg,
                                       "holdout_" + two_digit(i));
    DetectionReport a = run_detector(m.tr, &m.mvgp, &m.iid, mvgp_cfg, hold, ds.arm);
    DetectionReport b = run_detector(m.tr, &m.mvgp, &m.iid, iid_cfg, hold, ds.arm);
    mvgp_nll += a.nll;
    mvgp_vol += a.log_vol;
    mvgp_far += a.false_alarm_rate;
    iid_nll += b.nll;
    iid_vol += b.log_vol;
    iid_far += b.false_alarm_rate;
  }
  out.mvgp_nll = mvgp_nll / static_cast<double>(n_hold);
  out.mvgp_log_vol = mvgp_vol / static_cast<double>(n_hold);
  out.mvgp_far = mvgp_far / static_cast<double>(n_hold);
  out.iid_nll = iid_nll / static_cast<double>(n_hold);
  out.iid_log_vol = iid_vol / static_cast<double>(n_hold);
  out.iid_far = iid_far / static_cast<double>(n_hold);

  fs::create_directories(cfg.reports_dir);
  bench_save(out, cfg, (fs::path(cfg.reports_dir) / "bench.json").string(),
             (fs::path(cfg.reports_dir) / "bench.txt").string());
  return out;
}

std::string bench_to_text(const BenchSummary& s) {
  std::ostringstream os;
  os << "Replay-attack bench\n";
  os << "  severity_cm  method  mean_delay  no_detection  mean_alarm_frequency\n";
  char buf[160];
  for (const auto& r : s.rows) {
    if (r.mean_delay)
      std::snprintf(buf, sizeof(buf), "  %11.2f  %-6s  %10.2f  %12zu  %20.4f\n", r.severity_cm,
                    r.method.c_str(), *r.mean_delay, r.no_detection, r.mean_alarm_frequency);
    else
      std::snprintf(buf, sizeof(buf), "  %11.2f  %-6s  %10s  %12zu  %20.4f\n", r.severity_cm,
                    r.method.c_str(), "none", r.no_detection, r.mean_alarm_frequency);
    os << buf;
  }
  os << "Nominal hold-out fit quality\n";
  os << "  method  NLL        log-VOL    false_alarm_rate\n";
  std::snprintf(buf, sizeof(buf), "  %-6s  %9.4f  %9.4f  %16.5f\n", "mvgp", s.mvgp_nll,
                s.mvgp_log_vol, s.mvgp_far);
  os << buf;
  std::snprintf(buf, sizeof(buf), "  %-6s  %9.4f  %9.4f  %16.5f\n", "iid", s.iid_nll,
                s.iid_log_vol, s.iid_far);
  os << buf;
  return os.str();
}

void bench_save(const BenchSummary& s, const RunConfig& cfg, const std::string& json_path,
                const std::string& text_path) {
  json j;
  j["version"] = kVersion;
  j["config_hash"] = cfg.hash();
  json rows = json::array();
  for (const auto& r : s.rows) {
    json row;
    row["method"] = r.method;
    row["severity_cm"] = r.severity_cm;
    if (r.mean_delay)
      row["mean_delay"] = *r.mean_delay;
    else
      row["mean_delay"] = nullptr;
    row["no_detection"] = r.no_detection;
    row["mean_alarm_frequency"] = r.mean_alarm_frequency;
    rows.push_back(row);
  }
  j["rows"] = rows;
  j["nominal"] = {{"mvgp", {{"nll", s.mvgp_nll}, {"log_vol", s.mvgp_log_vol},
                            {"false_alarm_rate", s.mvgp_far}}},
                  {"iid", {{"nll", s.iid_nll}, {"log_vol", s.iid_log_vol},
                           {"false_alarm_rate", s.iid_far}}}};
  std::ofstream f(json_path);
  f << j.dump(2) << "\n";
  std::ofstream t(text_path);
  t << bench_to_text(s);
}

std::string cmd_report(const std::string& json_path) {
  std::ifstream f(json_path);
  if (!f) throw DataError("missing report file " + json_path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("malformed report JSON: " + std::string(e.what()));
  }
  if (j.contains("rows")) {
    BenchSummary s;
    for (const auto& row : j.at("rows")) {
      BenchRow r;
      r.method = row.at("method").get<std::string>();
      r.severity_cm = row.at("severity_cm").get<double>();
      if (!row.at("mean_delay").is_null()) r.mean_delay = row.at("mean_delay").get<double>();
      r.no_detection = row.at("no_detection").get<std::size_t>();
      r.mean_alarm_frequency = row.at("mean_alarm_frequency").get<double>();
      s.rows.push_back(r);
    }
    const auto& nom = j.at("nominal");
    s.mvgp_nll = nom.at("mvgp").at("nll").get<double>();
    s.mvgp_log_vol = nom.at("mvgp").at("log_vol").get<double>();
    s.mvgp_far = nom.at("mvgp").at("false_alarm_rate").get<double>();
    s.iid_nll = nom.at("iid").at("nll").get<double>();
    s.iid_log_vol = nom.at("iid").at("log_vol").get<double>();
    s.iid_far = nom.at("iid").at("false_alarm_rate").get<double>();
    return bench_to_text(s);
  }
  // Per-cycle detection report.
  std::ostringstream os;
  const auto& metrics = j.at("metrics");
  os << "Detection report (threshold " << j.at("threshold").get<double>() << ", alpha "
     << j.at("alpha").get<double>() << ")\n";
  os << "  frames:            " << j.at("g").size() << "\n";
  os << "  false_alarm_rate:  " << metrics.at("false_alarm_rate").get<double>() << "\n";
  os << "  NLL:               " << metrics.at("nll").get<double>() << "\n";
  os << "  log-VOL:           " << metrics.at("log_vol").get<double>() << "\n";
  if (metrics.contains("onset")) {
    os << "  onset:             " << metrics.at("onset").get<std::size_t>() << "\n";
    os << "  alarm_frequency:   " << metrics.at("alarm_frequency").get<double>() << "\n";
    if (metrics.at("detection_delay").is_number())
      os << "  detection_delay:   " << metrics.at("detection_delay").get<std::size_t>() << "\n";
    else
      os << "  detection_delay:   no detection\n";
  }
  return os.str();
}

}  // namespace vistr
