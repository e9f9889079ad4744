#include "vobs/trajectory_io.hpp"

#include <fstream>
#include <string>

#include "vobs/errors.hpp"
#include "vobs/text_format.hpp"

namespace vobs {

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  using text::format_double;
  os << kTrajectoryCsvHeader << '\n';
  for (const auto& s : traj.frames) {
    const SensorFrame& f = s.sensor;
    const GroundTruthState& g = s.truth;
    const double row[] = {f.t_s,      f.ax_mps2,  f.ay_mps2,         f.yaw_rate_radps,
                          f.wheel_speed_rr_mps,   f.steering_rad,    g.x_m,
                          g.y_m,      g.yaw_rad,  g.vx_mps,          g.vy_mps,
                          g.yaw_rate_radps,       g.ax_mps2,         g.ay_mps2,
                          g.beta_rad};
    for (std::size_t i = 0; i < std::size(row); ++i) {
      if (i) os << ',';
      os << format_double(row[i]);
    }
    os << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_trajectory_csv(os, traj);
  if (!os) throw IoError("write failed for " + path.string());
}

Trajectory read_trajectory_csv(std::istream& is, std::string label) {
  Trajectory traj;
  traj.label = std::move(label);
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("trajectory CSV is empty");
  if (text::trim(line) != kTrajectoryCsvHeader) {
    throw ValidationError("trajectory CSV header mismatch: '" + line + "'");
  }
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != 15) {
      throw ValidationError("trajectory CSV row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected 15");
    }
    double v[15];
    for (std::size_t i = 0; i < 15; ++i) v[i] = text::parse_double(fields[i]);
    TrajectorySample s;
    s.sensor = {v[0], v[1], v[2], v[3], v[4], v[5]};
    s.truth = {v[0], v[6], v[7], v[8], v[9], v[10], v[11], v[12], v[13], v[14]};
    traj.frames.push_back(s);
  }
  return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path, std::string label) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_trajectory_csv(is, std::move(label));
}

}  // namespace vobs
