#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vobs {

namespace constants {
inline constexpr double g_mps2 = 9.81;
// Sample period of the in-car sensors (50 Hz).
inline constexpr double dt_s = 0.02;
inline constexpr double timing_tolerance_s = 1e-9;
}  // namespace constants

// Magic-formula lateral tire coefficients. The peak factor multiplies the
// static vertical load, so D doubles as the friction coefficient.
struct TireParams {
  double stiffness_factor_B = 10.0;
  double shape_factor_C = 1.9;
  double peak_factor_D_per_N = 1.0;

  bool valid() const;
};

// Defaults are the AUDI A6 Avant C7 test vehicle.
struct VehicleParams {
  double mass_kg = 1578.0;
  double lf_m = 1.134;
  double lr_m = 1.578;
  double track_m = 1.513;
  double inertia_z_kgm2 = 2924.0;
  TireParams tire_front{};
  TireParams tire_rear{};

  double wheelbase_m() const { return lf_m + lr_m; }
  // Static axle loads, no load transfer.
  double front_load_N() const { return mass_kg * constants::g_mps2 * lr_m / wheelbase_m(); }
  double rear_load_N() const { return mass_kg * constants::g_mps2 * lf_m / wheelbase_m(); }

  bool valid() const;
};

// One 50 Hz sample of the in-car sensors. Wheel speed is the linear speed of
// the rear-right contact patch in m/s.
struct SensorFrame {
  double t_s = 0.0;
  double ax_mps2 = 0.0;
  double ay_mps2 = 0.0;
  double yaw_rate_radps = 0.0;
  double wheel_speed_rr_mps = 0.0;
  double steering_rad = 0.0;
};

// Reference-sensor state at the centre of gravity. Accelerations are body-frame.
struct GroundTruthState {
  double t_s = 0.0;
  double x_m = 0.0;
  double y_m = 0.0;
  double yaw_rad = 0.0;
  double vx_mps = 0.0;
  double vy_mps = 0.0;
  double yaw_rate_radps = 0.0;
  double ax_mps2 = 0.0;
  double ay_mps2 = 0.0;
  double beta_rad = 0.0;
};

struct TrajectorySample {
  SensorFrame sensor;
  GroundTruthState truth;
};

struct Trajectory {
  std::vector<TrajectorySample> frames;
  // Maneuver identifier, e.g. "slalom@0.40". Doubles as the split stratum.
  std::string label;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  std::vector<SensorFrame> sensors() const;
  std::vector<GroundTruthState> truth() const;
  double peak_abs_ay_mps2() const;
};

double side_slip(double vx_mps, double vy_mps);

// |ay| expressed in multiples of g.
double accel_in_g(double a_mps2);

enum class ViolationKind { non_finite, timing, misaligned };

struct Violation {
  std::size_t index = 0;
  ViolationKind kind = ViolationKind::non_finite;
  std::string message;
};

// Checks finiteness of every field, 50 Hz spacing and sensor/truth time
// alignment. An empty result means the trajectory is well formed.
std::vector<Violation> validate_trajectory(const Trajectory& traj);

}  // namespace vobs
