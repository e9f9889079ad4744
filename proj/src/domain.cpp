#include "vobs/domain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vobs {

bool TireParams::valid() const {
  return stiffness_factor_B > 0.0 && shape_factor_C > 1.0 && shape_factor_C < 2.0 &&
         peak_factor_D_per_N > 0.0;
}

bool VehicleParams::valid() const {
  return mass_kg > 0.0 && lf_m > 0.0 && lr_m > 0.0 && track_m > 0.0 && inertia_z_kgm2 > 0.0 &&
         tire_front.valid() && tire_rear.valid();
}

std::vector<SensorFrame> Trajectory::sensors() const {
  std::vector<SensorFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.sensor);
  return out;
}

std::vector<GroundTruthState> Trajectory::truth() const {
  std::vector<GroundTruthState> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.truth);
  return out;
}

double Trajectory::peak_abs_ay_mps2() const {
  double peak = 0.0;
  for (const auto& f : frames) peak = std::max(peak, std::abs(f.truth.ay_mps2));
  return peak;
}

double side_slip(double vx_mps, double vy_mps) { return std::atan2(vy_mps, vx_mps); }

double accel_in_g(double a_mps2) { return std::abs(a_mps2) / constants::g_mps2; }

namespace {

bool all_finite(const TrajectorySample& s) {
  const SensorFrame& f = s.sensor;
  const GroundTruthState& g = s.truth;
  const double values[] = {f.t_s,     f.ax_mps2,  f.ay_mps2,      f.yaw_rate_radps,
                           f.wheel_speed_rr_mps,  f.steering_rad, g.t_s,
                           g.x_m,     g.y_m,      g.yaw_rad,      g.vx_mps,
                           g.vy_mps,  g.yaw_rate_radps,           g.ax_mps2,
                           g.ay_mps2, g.beta_rad};
  return std::all_of(std::begin(values), std::end(values),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace

std::vector<Violation> validate_trajectory(const Trajectory& traj) {
  std::vector<Violation> out;
  for (std::size_t k = 0; k < traj.frames.size(); ++k) {
    const auto& s = traj.frames[k];
    if (!all_finite(s)) {
      out.push_back({k, ViolationKind::non_finite, "non-finite value at index " + std::to_string(k)});
      continue;
    }
    if (std::abs(s.sensor.t_s - s.truth.t_s) > constants::timing_tolerance_s) {
      out.push_back({k, ViolationKind::misaligned,
                     "sensor and ground-truth timestamps differ at index " + std::to_string(k)});
    }
    if (k > 0) {
      const double gap = s.sensor.t_s - traj.frames[k - 1].sensor.t_s;
      if (std::isfinite(gap) && std::abs(gap - constants::dt_s) > constants::timing_tolerance_s) {
        std::ostringstream msg;
        msg << "timing violation at index " << k << ": spacing " << gap << " s";
        out.push_back({k, ViolationKind::timing, msg.str()});
      }
    }
  }
  return out;
}

}  // namespace vobs
