#include "vobs/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "vobs/errors.hpp"

namespace vobs {

bool SimState::finite() const {
  return std::isfinite(x_m) && std::isfinite(y_m) && std::isfinite(yaw_rad) &&
         std::isfinite(vx_mps) && std::isfinite(vy_mps) && std::isfinite(yaw_rate_radps);
}

Setpoint Setpoint::open(double steering_rad, double long_force_N) {
  Setpoint sp;
  sp.mode = Mode::open_loop;
  sp.open_loop = {steering_rad, long_force_N};
  return sp;
}

Setpoint Setpoint::track(double curvature_1pm, double speed_mps, double accel_ff_mps2) {
  Setpoint sp;
  sp.mode = Mode::closed_loop;
  sp.curvature_1pm = curvature_1pm;
  sp.speed_mps = speed_mps;
  sp.accel_ff_mps2 = accel_ff_mps2;
  return sp;
}

bool ManeuverScript::valid() const {
  return duration_s > 0.0 && std::isfinite(duration_s) && static_cast<bool>(control_law) &&
         initial.finite();
}

SensorNoiseSpec SensorNoiseSpec::noiseless() {
  SensorNoiseSpec n;
  n.std_dev = {};
  return n;
}

bool SensorNoiseSpec::valid() const {
  return std_dev.ax >= 0 && std_dev.ay >= 0 && std_dev.yaw_rate >= 0 && std_dev.wheel_speed >= 0 &&
         std_dev.steering >= 0;
}

double pacejka_lateral_force(double slip_rad, double vertical_load_N, const TireParams& tire) {
  if (!(vertical_load_N > 0.0)) {
    throw ValidationError("pacejka_lateral_force: vertical load must be positive");
  }
  const double B = tire.stiffness_factor_B;
  const double C = tire.shape_factor_C;
  const double D = tire.peak_factor_D_per_N * vertical_load_N;
  return D * std::sin(C * std::atan(B * slip_rad));
}

double pacejka_peak_slip(const TireParams& tire) {
  return std::tan(std::numbers::pi / (2.0 * tire.shape_factor_C)) / tire.stiffness_factor_B;
}

AxleForces bicycle_axle_forces(const SimState& s, const ControlInput& u, const VehicleParams& p) {
  AxleForces f;
  const double r = s.yaw_rate_radps;
  f.slip_front_rad = u.steering_rad - std::atan2(s.vy_mps + p.lf_m * r, s.vx_mps);
  f.slip_rear_rad = -std::atan2(s.vy_mps - p.lr_m * r, s.vx_mps);
  f.lateral_front_N = pacejka_lateral_force(f.slip_front_rad, p.front_load_N(), p.tire_front);
  f.lateral_rear_N = pacejka_lateral_force(f.slip_rear_rad, p.rear_load_N(), p.tire_rear);
  return f;
}

SimState bicycle_derivative(const SimState& s, const ControlInput& u, const VehicleParams& p) {
  const AxleForces f = bicycle_axle_forces(s, u, p);
  const double r = s.yaw_rate_radps;
  const double cd = std::cos(u.steering_rad);
  const double sd = std::sin(u.steering_rad);
  const double cy = std::cos(s.yaw_rad);
  const double sy = std::sin(s.yaw_rad);
  SimState d;
  d.x_m = s.vx_mps * cy - s.vy_mps * sy;
  d.y_m = s.vx_mps * sy + s.vy_mps * cy;
  d.yaw_rad = r;
  d.vx_mps = (u.long_force_N - f.lateral_front_N * sd) / p.mass_kg + r * s.vy_mps;
  d.vy_mps = (f.lateral_front_N * cd + f.lateral_rear_N) / p.mass_kg - r * s.vx_mps;
  d.yaw_rate_radps = (p.lf_m * f.lateral_front_N * cd - p.lr_m * f.lateral_rear_N) / p.inertia_z_kgm2;
  return d;
}

namespace {

SimState axpy(const SimState& s, double h, const SimState& d) {
  return {s.x_m + h * d.x_m,       s.y_m + h * d.y_m,       s.yaw_rad + h * d.yaw_rad,
          s.vx_mps + h * d.vx_mps, s.vy_mps + h * d.vy_mps, s.yaw_rate_radps + h * d.yaw_rate_radps};
}

// Generic RK4 over a (t, state) -> derivative callable.
template <typename Deriv>
SimState rk4(const SimState& s, double t, double h, Deriv&& f) {
  const SimState k1 = f(t, s);
  const SimState k2 = f(t + 0.5 * h, axpy(s, 0.5 * h, k1));
  const SimState k3 = f(t + 0.5 * h, axpy(s, 0.5 * h, k2));
  const SimState k4 = f(t + h, axpy(s, h, k3));
  auto comb = [h](double x, double a, double b, double c, double d) {
    return x + h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
  };
  return {comb(s.x_m, k1.x_m, k2.x_m, k3.x_m, k4.x_m),
          comb(s.y_m, k1.y_m, k2.y_m, k3.y_m, k4.y_m),
          comb(s.yaw_rad, k1.yaw_rad, k2.yaw_rad, k3.yaw_rad, k4.yaw_rad),
          comb(s.vx_mps, k1.vx_mps, k2.vx_mps, k3.vx_mps, k4.vx_mps),
          comb(s.vy_mps, k1.vy_mps, k2.vy_mps, k3.vy_mps, k4.vy_mps),
          comb(s.yaw_rate_radps, k1.yaw_rate_radps, k2.yaw_rate_radps, k3.yaw_rate_radps,
               k4.yaw_rate_radps)};
}

double friction_limit_N(const VehicleParams& p) {
  const double mu = std::min(p.tire_front.peak_factor_D_per_N, p.tire_rear.peak_factor_D_per_N);
  return mu * p.mass_kg * constants::g_mps2;
}

ControlInput saturate(ControlInput u, const VehicleParams& p) {
  const double fmax = friction_limit_N(p);
  u.steering_rad = std::clamp(u.steering_rad, -kMaxSteeringRad, kMaxSteeringRad);
  u.long_force_N = std::clamp(u.long_force_N, -fmax, fmax);
  return u;
}

// Static state-feedback controller, so the closed loop is an ODE that RK4
// integrates at full order. Steering: curvature feed-forward (the default
// vehicle is neutral-steer, so L*kappa is the steady-state angle) plus yaw-rate
// feedback. Force: feedback-linearized speed tracking.
ControlInput control(const Setpoint& sp, const SimState& s, const VehicleParams& p,
                     const ControllerGains& gains) {
  if (sp.mode == Setpoint::Mode::open_loop) return saturate(sp.open_loop, p);
  const double r_ref = s.vx_mps * sp.curvature_1pm;
  ControlInput u;
  u.steering_rad = p.wheelbase_m() * sp.curvature_1pm + gains.yaw_rate_p_s * (r_ref - s.yaw_rate_radps);
  u.steering_rad = std::clamp(u.steering_rad, -kMaxSteeringRad, kMaxSteeringRad);
  const AxleForces f = bicycle_axle_forces(s, u, p);
  const double accel_cmd = sp.accel_ff_mps2 + gains.speed_p_per_s * (sp.speed_mps - s.vx_mps);
  u.long_force_N = p.mass_kg * (accel_cmd - s.yaw_rate_radps * s.vy_mps) +
                   f.lateral_front_N * std::sin(u.steering_rad);
  return saturate(u, p);
}

}  // namespace

SimState step_dynamic_bicycle(const SimState& state, const ControlInput& u, const VehicleParams& p,
                              double dt_s) {
  if (!(dt_s > 0.0) || !std::isfinite(dt_s)) {
    throw ValidationError("step_dynamic_bicycle: dt must be positive and finite");
  }
  if (!state.finite()) throw ValidationError("step_dynamic_bicycle: non-finite state");
  return rk4(state, 0.0, dt_s,
             [&](double, const SimState& s) { return bicycle_derivative(s, u, p); });
}

SimulationResult simulate(const ManeuverScript& script, const VehicleParams& p, double substep_s,
                          int substeps_per_frame, const ControllerGains& gains) {
  if (!script.valid()) throw ValidationError("invalid maneuver script '" + script.name + "'");
  if (!p.valid()) throw ValidationError("invalid vehicle parameters");
  if (!(substep_s > 0.0) || substeps_per_frame < 1) {
    throw ValidationError("simulate: bad integration substep");
  }
  const double frame_dt = substep_s * substeps_per_frame;
  const auto n_frames = static_cast<std::size_t>(std::llround(script.duration_s / constants::dt_s));

  auto closed_loop = [&](double t, const SimState& s) {
    return bicycle_derivative(s, control(script.control_law(t), s, p, gains), p);
  };

  SimulationResult out;
  out.truth.reserve(n_frames);
  out.steering_rad.reserve(n_frames);
  out.max_abs_slip_rad.reserve(n_frames);
  SimState s = script.initial;
  for (std::size_t k = 0; k < n_frames; ++k) {
    const double t_frame = static_cast<double>(k) * frame_dt;
    const ControlInput u = control(script.control_law(t_frame), s, p, gains);
    const SimState d = bicycle_derivative(s, u, p);
    const AxleForces f = bicycle_axle_forces(s, u, p);
    GroundTruthState g;
    g.t_s = static_cast<double>(k) * constants::dt_s;
    g.x_m = s.x_m;
    g.y_m = s.y_m;
    g.yaw_rad = s.yaw_rad;
    g.vx_mps = s.vx_mps;
    g.vy_mps = s.vy_mps;
    g.yaw_rate_radps = s.yaw_rate_radps;
    g.ax_mps2 = d.vx_mps - s.yaw_rate_radps * s.vy_mps;
    g.ay_mps2 = d.vy_mps + s.yaw_rate_radps * s.vx_mps;
    g.beta_rad = side_slip(s.vx_mps, s.vy_mps);
    out.truth.push_back(g);
    out.steering_rad.push_back(u.steering_rad);
    out.max_abs_slip_rad.push_back(std::max(std::abs(f.slip_front_rad), std::abs(f.slip_rear_rad)));

    for (int j = 0; j < substeps_per_frame; ++j) {
      const double t = static_cast<double>(k * substeps_per_frame + j) * substep_s;
      s = rk4(s, t, substep_s, closed_loop);
    }
    if (!s.finite()) {
      std::ostringstream msg;
      msg << "maneuver '" << script.name << "' diverged at t=" << t_frame + frame_dt << " s";
      throw NumericalError(msg.str());
    }
  }
  return out;
}

std::vector<SensorFrame> synthesize_sensors(std::span<const GroundTruthState> gt,
                                            std::span<const double> steering_rad,
                                            const VehicleParams& p, const SensorNoiseSpec& noise) {
  if (gt.empty()) throw ValidationError("synthesize_sensors: empty ground-truth sequence");
  if (steering_rad.size() != gt.size()) {
    throw ValidationError("synthesize_sensors: steering and ground-truth lengths differ");
  }
  if (!noise.valid()) throw ValidationError("synthesize_sensors: negative noise std");
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const ChannelValues& sd = noise.std_dev;
  const ChannelValues& b = noise.bias;
  std::vector<SensorFrame> out;
  out.reserve(gt.size());
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const GroundTruthState& g = gt[k];
    // Fixed draw order keeps the stream reproducible per channel.
    const double n_ax = unit(rng), n_ay = unit(rng), n_r = unit(rng), n_w = unit(rng),
                 n_d = unit(rng);
    SensorFrame f;
    f.t_s = g.t_s;
    f.ax_mps2 = g.ax_mps2 + b.ax + sd.ax * n_ax;
    f.ay_mps2 = g.ay_mps2 + b.ay + sd.ay * n_ay;
    f.yaw_rate_radps = g.yaw_rate_radps + b.yaw_rate + sd.yaw_rate * n_r;
    f.wheel_speed_rr_mps =
        g.vx_mps + 0.5 * p.track_m * g.yaw_rate_radps + b.wheel_speed + sd.wheel_speed * n_w;
    f.steering_rad = steering_rad[k] + b.steering + sd.steering * n_d;
    out.push_back(f);
  }
  return out;
}

Trajectory run_maneuver(const ManeuverScript& script, const VehicleParams& p,
                        const SensorNoiseSpec& noise) {
  const SimulationResult sim = simulate(script, p);
  const auto sensors = synthesize_sensors(sim.truth, sim.steering_rad, p, noise);
  Trajectory traj;
  traj.label = script.name;
  traj.frames.reserve(sim.truth.size());
  for (std::size_t k = 0; k < sim.truth.size(); ++k) traj.frames.push_back({sensors[k], sim.truth[k]});
  return traj;
}

}  // namespace vobs
