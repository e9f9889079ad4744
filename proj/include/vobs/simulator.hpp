#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vobs/domain.hpp"

namespace vobs {

struct SimState {
  double x_m = 0.0;
  double y_m = 0.0;
  double yaw_rad = 0.0;
  double vx_mps = 0.0;
  double vy_mps = 0.0;
  double yaw_rate_radps = 0.0;

  bool finite() const;
};

struct ControlInput {
  double steering_rad = 0.0;  // road-wheel angle
  double long_force_N = 0.0;  // net longitudinal force at the CoG
};

inline constexpr double kMaxSteeringRad = 0.6;

// What a maneuver asks for at time t. Open-loop setpoints are applied as-is
// (after saturation); closed-loop setpoints are tracked by the built-in
// speed and curvature controllers of run_maneuver().
struct Setpoint {
  enum class Mode { open_loop, closed_loop };
  Mode mode = Mode::closed_loop;
  ControlInput open_loop{};
  double curvature_1pm = 0.0;
  double speed_mps = 0.0;
  double accel_ff_mps2 = 0.0;

  static Setpoint open(double steering_rad, double long_force_N);
  static Setpoint track(double curvature_1pm, double speed_mps, double accel_ff_mps2 = 0.0);
};

using ControlLaw = std::function<Setpoint(double t_s)>;

struct ManeuverScript {
  std::string name;
  double duration_s = 0.0;
  ControlLaw control_law;
  SimState initial{};

  bool valid() const;
};

struct ChannelValues {
  double ax = 0.0;
  double ay = 0.0;
  double yaw_rate = 0.0;
  double wheel_speed = 0.0;
  double steering = 0.0;
};

struct SensorNoiseSpec {
  ChannelValues std_dev{0.05, 0.05, 0.002, 0.03, 0.001};
  ChannelValues bias{};
  std::uint64_t seed = 0;

  static SensorNoiseSpec noiseless();
  bool valid() const;
};

// Fy = D*Fz*sin(C*atan(B*slip)). Throws ValidationError for Fz <= 0.
double pacejka_lateral_force(double slip_rad, double vertical_load_N, const TireParams& tire);

// Slip angle at which the magic formula peaks: tan(pi/(2C))/B.
double pacejka_peak_slip(const TireParams& tire);

struct AxleForces {
  double slip_front_rad = 0.0;
  double slip_rear_rad = 0.0;
  double lateral_front_N = 0.0;
  double lateral_rear_N = 0.0;
};

AxleForces bicycle_axle_forces(const SimState& s, const ControlInput& u, const VehicleParams& p);

// Time derivative of the dynamic bicycle model with magic-formula tires.
SimState bicycle_derivative(const SimState& s, const ControlInput& u, const VehicleParams& p);

// One classical RK4 step with the control held constant over the step.
SimState step_dynamic_bicycle(const SimState& state, const ControlInput& u, const VehicleParams& p,
                              double dt_s);

// Integration substep used by run_maneuver (500 Hz, decimated 10:1 to 50 Hz).
inline constexpr double kSimSubstep_s = 0.002;
inline constexpr int kSubstepsPerFrame = 10;

struct ControllerGains {
  double speed_p_per_s = 2.0;
  double speed_i_per_s2 = 0.5;
  double yaw_rate_p_s = 0.1;
};

// Ground truth at 50 Hz plus the applied steering for each sample.
struct SimulationResult {
  std::vector<GroundTruthState> truth;
  std::vector<double> steering_rad;
  std::vector<double> max_abs_slip_rad;  // max(|alpha_f|, |alpha_r|) per sample
};

SimulationResult simulate(const ManeuverScript& script, const VehicleParams& p,
                          double substep_s = kSimSubstep_s, int substeps_per_frame = kSubstepsPerFrame,
                          const ControllerGains& gains = {});

// Body-frame accelerometers, gyro, rear-right wheel speed and steering sensor
// with additive Gaussian noise and constant bias.
std::vector<SensorFrame> synthesize_sensors(std::span<const GroundTruthState> gt,
                                            std::span<const double> steering_rad,
                                            const VehicleParams& p, const SensorNoiseSpec& noise);

Trajectory run_maneuver(const ManeuverScript& script, const VehicleParams& p,
                        const SensorNoiseSpec& noise);

enum class ManeuverKind { city_mix, step_steer, double_lane_change, u_turn, slalom, constant_radius_ramp };

std::string_view to_string(ManeuverKind kind);
ManeuverKind parse_maneuver_kind(std::string_view name);
std::vector<ManeuverKind> all_maneuver_kinds();

// Peak lateral acceleration a script of the given intensity aims for.
double target_peak_lateral_g(double intensity);

// Parameterized scripts. `seed` jitters speeds/periods so that several
// instances of the same stratum differ; duration uses a per-kind default.
ManeuverScript builtin_script(ManeuverKind kind, double intensity,
                              std::optional<double> duration_s = std::nullopt,
                              std::uint64_t seed = 0);

std::string stratum_label(ManeuverKind kind, double intensity);

}  // namespace vobs
