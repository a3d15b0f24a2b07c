#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vistr/sim.hpp"

namespace vistr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json arm_to_json(const ArmSpec& arm) {
  return {{"joint_count", arm.joint_count},
          {"link_lengths_cm", arm.link_lengths_cm},
          {"link_thickness_cm", arm.link_thickness_cm},
          {"base_x_cm", arm.base_x_cm},
          {"base_y_cm", arm.base_y_cm},
          {"pixels_per_cm", arm.pixels_per_cm},
          {"image_height", arm.image_height},
          {"image_width", arm.image_width}};
}

ArmSpec arm_from_json(const json& j) {
  ArmSpec arm;
  arm.joint_count = j.at("joint_count").get<std::size_t>();
  arm.link_lengths_cm = j.at("link_lengths_cm").get<std::vector<double>>();
  arm.link_thickness_cm = j.at("link_thickness_cm").get<double>();
  arm.base_x_cm = j.at("base_x_cm").get<double>();
  arm.base_y_cm = j.at("base_y_cm").get<double>();
  arm.pixels_per_cm = j.at("pixels_per_cm").get<double>();
  arm.image_height = j.at("image_height").get<std::size_t>();
  arm.image_width = j.at("image_width").get<std::size_t>();
  return arm;
}

void write_angles_csv(const std::string& path, const Matrix& true_angles,
                      const Matrix& reported_angles) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  const Eigen::Index J = true_angles.cols();
  f << "t";
  for (Eigen::Index j = 0; j < J; ++j) f << ",true_" << (j + 1);
  for (Eigen::Index j = 0; j < J; ++j) f << ",reported_" << (j + 1);
  f << "\n";
  char buf[40];
  for (Eigen::Index t = 0; t < true_angles.rows(); ++t) {
    f << t;
    for (Eigen::Index j = 0; j < J; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", true_angles(t, j));
      f << buf;
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", reported_angles(t, j));
      f << buf;
    }
    f << "\n";
  }
}

void read_angles_csv(const std::string& path, Eigen::Index T, Eigen::Index J, Matrix& true_angles,
                     Matrix& reported_angles) {
  std::ifstream f(path);
  if (!f) throw DataError("missing " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty angles file " + path);
  true_angles.resize(T, J);
  reported_angles.resize(T, J);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!std::getline(f, line)) throw DataError("truncated angles file " + path);
    const char* p = line.c_str();
    char* end = nullptr;
    std::strtol(p, &end, 10);  // frame index column
    p = end;
    auto next = [&]() {
      if (*p != ',') throw DataError("malformed angles row in " + path);
      ++p;
      double v = std::strtod(p, &end);
      if (end == p) throw DataError("malformed angles row in " + path);
      p = end;
      return v;
    };
    for (Eigen::Index j = 0; j < J; ++j) true_angles(t, j) = next();
    for (Eigen::Index j = 0; j < J; ++j) reported_angles(t, j) = next();
  }
}

std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.pgm", t);
  return buf;
}

}  // namespace

void write_pgm(const std::string& path, const Matrix& mask01) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "P5\n" << mask01.cols() << " " << mask01.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(mask01.cols()));
  for (Eigen::Index r = 0; r < mask01.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask01.cols(); ++c)
      row[static_cast<std::size_t>(c)] = mask01(r, c) != 0.0 ? 255 : 0;
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

Matrix read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing " + path);
  std::string magic;
  long w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw DataError("unsupported PGM header in " + path);
  f.get();  // single whitespace after maxval
  Matrix out(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (long r = 0; r < h; ++r) {
    f.read(reinterpret_cast<char*>(row.data()), w);
    if (!f) throw DataError("truncated PGM data in " + path);
    for (long c = 0; c < w; ++c) out(r, c) = row[static_cast<std::size_t>(c)] >= 128 ? 1.0 : 0.0;
  }
  return out;
}

const CycleData& Dataset::cycle(const std::string& id) const {
  for (const auto& c : cycles)
    if (c.id == id) return c;
  throw DataError("unknown cycle id '" + id + "'");
}

void write_dataset(const std::string& dir, const ArmSpec& arm,
                   const std::vector<CycleData>& cycles) {
  fs::create_directories(dir);
  json manifest;
  if (cycles.empty()) throw DataError("write_dataset: no cycles");
  manifest["J"] = cycles[0].true_angles.cols();
  manifest["T"] = cycles[0].frames();
  manifest["H"] = arm.image_height;
  manifest["W"] = arm.image_width;
  manifest["arm"] = arm_to_json(arm);
  json list = json::array();
  for (const auto& c : cycles) {
    json entry;
    entry["id"] = c.id;
    entry["seed"] = c.seed;
    if (c.attack) {
      entry["attack"] = {{"kind", "replay"},
                         {"onset", c.attack->onset},
                         {"replay_shift", c.attack->replay_shift},
                         {"deviation_cm", c.attack->deviation_cm},
                         {"ramp_frames", c.attack->ramp_frames}};
      entry["recorded_id"] = c.recorded_id;
    }
    list.push_back(entry);

    const fs::path cdir = fs::path(dir) / c.id;
    fs::create_directories(cdir);
    write_angles_csv((cdir / "angles.csv").string(), c.true_angles, c.reported_angles);
    const std::size_t T = c.frames();
    Matrix mask(arm.image_height, arm.image_width);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t r = 0; r < arm.image_height; ++r)
        for (std::size_t cc = 0; cc < arm.image_width; ++cc)
          mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cc)) =
              c.masks.at({t, r, cc});
      write_pgm((cdir / frame_name(t)).string(), mask);
    }
    write_ten((cdir / "masks.ten").string(), c.masks);
  }
  manifest["cycles"] = list;
  std::ofstream f(fs::path(dir) / "manifest.json");
  f << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw DataError("missing dataset manifest in " + dir);
  json manifest;
  try {
    manifest = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest in " + dir + ": " + e.what());
  }
  Dataset ds;
  ds.arm = arm_from_json(manifest.at("arm"));
  const std::size_t T = manifest.at("T").get<std::size_t>();
  const Eigen::Index J = manifest.at("J").get<Eigen::Index>();
  const std::size_t H = manifest.at("H").get<std::size_t>();
  const std::size_t W = manifest.at("W").get<std::size_t>();

  for (const auto& entry : manifest.at("cycles")) {
    CycleData c;
    c.id = entry.at("id").get<std::string>();
    c.seed = entry.value("seed", std::uint64_t{0});
    if (entry.contains("attack")) {
      AttackSpec a;
      const auto& aj = entry.at("attack");
      a.onset = aj.at("onset").get<std::size_t>();
      a.replay_shift = aj.at("replay_shift").get<std::size_t>();
      a.deviation_cm = aj.at("deviation_cm").get<double>();
      a.ramp_frames = aj.at("ramp_frames").get<std::size_t>();
      c.attack = a;
      c.recorded_id = entry.value("recorded_id", std::string{});
    }
    const fs::path cdir = fs::path(dir) / c.id;
    read_angles_csv((cdir / "angles.csv").string(), static_cast<Eigen::Index>(T), J,
                    c.true_angles, c.reported_angles);
    const fs::path packed = cdir / "masks.ten";
    if (fs::exists(packed)) {
      c.masks = read_ten(packed.string());
      if (c.masks.dims() != std::vector<std::size_t>{T, H, W})
        throw DataError("cycle '" + c.id + "': packed mask stack shape mismatch");
    } else {
      c.masks = DenseTensor({T, H, W});
      for (std::size_t t = 0; t < T; ++t) {
        const fs::path frame = cdir / frame_name(t);
        if (!fs::exists(frame))
          throw DataError("cycle '" + c.id + "': expected " + std::to_string(T) +
                          " mask frames, missing " + frame.filename().string());
        Matrix mask = read_pgm(frame.string());
        if (static_cast<std::size_t>(mask.rows()) != H ||
            static_cast<std::size_t>(mask.cols()) != W)
          throw DataError("cycle '" + c.id + "': mask frame shape mismatch");
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t cc = 0; cc < W; ++cc)
            c.masks.at({t, r, cc}) =
                mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cc));
      }
    }
    ds.cycles.push_back(std::move(c));
  }
  return ds;
}

}  // namespace vistr
