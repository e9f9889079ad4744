#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <random>

#include "vobs/errors.hpp"
#include "vobs/simulator.hpp"

namespace vobs {

namespace {

constexpr double kPi = std::numbers::pi;

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double smoothstep_rate(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 6.0 * x * (1.0 - x);
}

enum class CurveShape { hold, ramp, sine };
enum class SpeedShape { smooth, linear };

// One piece of a time-indexed plan: speed moves v0 -> v1 while the curvature
// follows `shape` between k0 and k1 (sine: amplitude k0, one full period).
struct Segment {
  double duration_s = 0.0;
  double v0 = 0.0;
  double v1 = 0.0;
  CurveShape shape = CurveShape::hold;
  double k0 = 0.0;
  double k1 = 0.0;
  SpeedShape speed_shape = SpeedShape::smooth;

  Setpoint at(double tau) const {
    const double x = duration_s > 0.0 ? tau / duration_s : 1.0;
    double v = 0.0;
    double a = 0.0;
    if (speed_shape == SpeedShape::linear) {
      v = v0 + (v1 - v0) * std::clamp(x, 0.0, 1.0);
      a = (x >= 0.0 && x <= 1.0) ? (v1 - v0) / duration_s : 0.0;
    } else {
      v = v0 + (v1 - v0) * smoothstep(x);
      a = (v1 - v0) * smoothstep_rate(x) / duration_s;
    }
    double k = k0;
    switch (shape) {
      case CurveShape::hold: k = k0; break;
      case CurveShape::ramp: k = k0 + (k1 - k0) * smoothstep(x); break;
      case CurveShape::sine: k = k0 * std::sin(2.0 * kPi * std::clamp(x, 0.0, 1.0)); break;
    }
    return Setpoint::track(k, v, a);
  }
};

class Plan {
 public:
  double speed() const { return speed_; }
  double duration() const { return end_; }

  explicit Plan(double v_start) : speed_(v_start) {}

  void cruise(double dur, double v_to) {
    add({dur, speed_, v_to, CurveShape::hold, 0.0, 0.0});
  }
  void ramp_speed_linear(double dur, double v_to, double k) {
    Segment s{dur, speed_, v_to, CurveShape::hold, k, k};
    s.speed_shape = SpeedShape::linear;
    add(s);
  }
  void curvature_ramp(double dur, double k_from, double k_to) {
    add({dur, speed_, speed_, CurveShape::ramp, k_from, k_to});
  }
  void hold(double dur, double k) { add({dur, speed_, speed_, CurveShape::hold, k, k}); }
  void sine(double dur, double amplitude) {
    add({dur, speed_, speed_, CurveShape::sine, amplitude, 0.0});
  }
  // Heading change `angle` at constant speed: smoothstep in, hold, out.
  void turn(double angle, double peak_k, double ramp_s) {
    const double v = speed_;
    const double sign = angle >= 0 ? 1.0 : -1.0;
    double k = std::abs(peak_k);
    double hold_s = std::abs(angle) / (v * k) - ramp_s;
    if (hold_s < 0.0) {
      // Too short for full ramps at this curvature: lower the peak instead.
      k = std::abs(angle) / (v * ramp_s);
      hold_s = 0.0;
    }
    curvature_ramp(ramp_s, 0.0, sign * k);
    if (hold_s > 0.0) hold(hold_s, sign * k);
    curvature_ramp(ramp_s, sign * k, 0.0);
  }

  ControlLaw law() const {
    auto segs = std::make_shared<std::vector<Segment>>(segments_);
    auto starts = std::make_shared<std::vector<double>>(starts_);
    const double v_end = speed_;
    return [segs, starts, v_end](double t) {
      if (segs->empty() || t < 0.0) return Setpoint::track(0.0, v_end);
      auto it = std::upper_bound(starts->begin(), starts->end(), t);
      const auto idx = static_cast<std::size_t>(std::distance(starts->begin(), it)) - 1;
      const Segment& s = (*segs)[idx];
      if (t - (*starts)[idx] > s.duration_s) return Setpoint::track(0.0, v_end);
      return s.at(t - (*starts)[idx]);
    };
  }

 private:
  void add(const Segment& s) {
    starts_.push_back(end_);
    segments_.push_back(s);
    end_ += s.duration_s;
    speed_ = s.v1;
  }

  double speed_;
  double end_ = 0.0;
  std::vector<Segment> segments_;
  std::vector<double> starts_;
};

class Jitter {
 public:
  explicit Jitter(std::uint64_t seed) : rng_(seed) {}
  double around(double nominal, double rel) {
    return nominal * std::uniform_real_distribution<double>(1.0 - rel, 1.0 + rel)(rng_);
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

 private:
  std::mt19937_64 rng_;
};

ManeuverScript finish(const std::string& name, const Plan& plan, double duration_s, double v0) {
  ManeuverScript m;
  m.name = name;
  m.duration_s = duration_s;
  m.control_law = plan.law();
  m.initial.vx_mps = v0;
  return m;
}

ManeuverScript make_step_steer(double a, double duration, Jitter& j, const std::string& name) {
  const double v = j.around(15.0, 0.1);
  const double k = a / (v * v);
  Plan plan(v);
  double sign = j.coin(0.5) ? 1.0 : -1.0;
  const double pattern = 2.0 + 0.3 + 3.0 + 0.3;
  while (plan.duration() + pattern + 2.0 <= duration) {
    plan.cruise(2.0, v);
    plan.curvature_ramp(0.3, 0.0, sign * k);
    plan.hold(3.0, sign * k);
    plan.curvature_ramp(0.3, sign * k, 0.0);
    sign = -sign;
  }
  plan.cruise(std::max(0.0, duration - plan.duration()), v);
  return finish(name, plan, duration, v);
}

ManeuverScript make_double_lane_change(double a, double duration, Jitter& j,
                                       const std::string& name) {
  const double v = j.around(16.0, 0.1);
  const double amplitude = a / (v * v);
  // One full sine period of curvature shifts the car ~3.5 m sideways.
  const double period = std::clamp(std::sqrt(2.0 * kPi * 3.5 / a), 1.6, 6.0) * j.around(1.0, 0.1);
  Plan plan(v);
  double sign = j.coin(0.5) ? 1.0 : -1.0;
  const double pattern = 2.0 + 2.0 * period + 1.5;
  while (plan.duration() + pattern + 2.0 <= duration) {
    plan.cruise(2.0, v);
    plan.sine(period, sign * amplitude);
    plan.cruise(1.5, v);
    plan.sine(period, -sign * amplitude);
    sign = -sign;
  }
  plan.cruise(std::max(0.0, duration - plan.duration()), v);
  return finish(name, plan, duration, v);
}

ManeuverScript make_u_turn(double a, double duration, Jitter& j, const std::string& name) {
  const double v_cruise = j.around(10.0, 0.1);
  const double v_turn = std::clamp(std::sqrt(a * j.around(10.0, 0.2)), 3.0, 9.0);
  const double k = a / (v_turn * v_turn);
  Plan plan(v_cruise);
  double sign = j.coin(0.5) ? 1.0 : -1.0;
  const double pattern = 3.0 + 3.0 + kPi / (v_turn * k) + 1.5 + 4.0;
  while (plan.duration() + pattern + 2.0 <= duration) {
    plan.cruise(3.0, v_cruise);
    plan.cruise(3.0, v_turn);
    plan.turn(sign * kPi, k, 1.5);
    plan.cruise(4.0, v_cruise);
    sign = -sign;
  }
  plan.cruise(std::max(0.0, duration - plan.duration()), v_cruise);
  return finish(name, plan, duration, v_cruise);
}

ManeuverScript make_slalom(double a, double duration, Jitter& j, const std::string& name) {
  const double v = j.around(14.0, 0.1);
  const double period = j.around(3.0, 0.15);
  const double amplitude = a / (v * v);
  Plan plan(v);
  const double sign = j.coin(0.5) ? 1.0 : -1.0;
  plan.cruise(2.0, v);
  while (plan.duration() + period + 2.0 <= duration) plan.sine(period, sign * amplitude);
  plan.cruise(std::max(0.0, duration - plan.duration()), v);
  return finish(name, plan, duration, v);
}

ManeuverScript make_constant_radius_ramp(double a, double duration, Jitter& j,
                                         const std::string& name) {
  const double radius = j.around(40.0, 0.1);
  const double k = (j.coin(0.5) ? 1.0 : -1.0) / radius;
  const double v0 = std::sqrt(0.1 * constants::g_mps2 * radius);
  const double v_peak = std::sqrt(a * radius);
  const double fixed = 2.0 + 1.0 + 2.0 + 3.0 + 1.0 + 1.0;
  const double ramp_s = std::max(5.0, duration - fixed);
  Plan plan(v0);
  plan.cruise(2.0, v0);
  plan.curvature_ramp(1.0, 0.0, k);
  plan.ramp_speed_linear(ramp_s, std::max(v_peak, v0), k);
  plan.hold(2.0, k);
  plan.ramp_speed_linear(3.0, v0, k);
  plan.curvature_ramp(1.0, k, 0.0);
  plan.cruise(std::max(0.0, std::max(duration, fixed + ramp_s) - plan.duration()), v0);
  return finish(name, plan, std::max(duration, plan.duration()), v0);
}

// Stylized urban driving: random mix of cruising, bends, lane changes,
// junction turns, stop-and-go, and the occasional U-turn.
ManeuverScript make_city_mix(double a, double duration, Jitter& j, const std::string& name) {
  const double v_start = j.uniform(7.0, 11.0);
  Plan plan(v_start);
  while (plan.duration() < duration - 25.0) {
    const double pick = j.uniform(0.0, 1.0);
    const double v = plan.speed();
    if (pick < 0.30) {
      plan.cruise(j.uniform(4.0, 12.0), j.uniform(6.0, 14.0));
    } else if (pick < 0.50) {
      const double ay = a * j.uniform(0.2, 0.6);
      const double dur = j.uniform(4.0, 10.0);
      const double sign = j.coin(0.5) ? 1.0 : -1.0;
      plan.curvature_ramp(dur / 2.0, 0.0, sign * ay / (v * v));
      plan.curvature_ramp(dur / 2.0, sign * ay / (v * v), 0.0);
    } else if (pick < 0.70) {
      const double ay = a * j.uniform(0.3, 0.7);
      plan.sine(j.uniform(3.0, 5.0), (j.coin(0.5) ? 1.0 : -1.0) * ay / (v * v));
    } else if (pick < 0.87) {
      const double ay = a * j.uniform(0.6, 1.0);
      const double v_turn = std::clamp(std::sqrt(ay * j.uniform(8.0, 15.0)), 3.0, v);
      plan.cruise(j.uniform(2.0, 4.0), v_turn);
      plan.turn((j.coin(0.5) ? 1.0 : -1.0) * kPi / 2.0, ay / (v_turn * v_turn), 1.5);
      plan.cruise(j.uniform(3.0, 5.0), j.uniform(7.0, 12.0));
    } else if (pick < 0.95) {
      plan.cruise(j.uniform(3.0, 5.0), 3.0);
      plan.cruise(j.uniform(1.0, 3.0), 3.0);
      plan.cruise(j.uniform(4.0, 7.0), j.uniform(7.0, 12.0));
    } else {
      const double ay = a * j.uniform(0.7, 1.0);
      const double v_turn = std::clamp(std::sqrt(ay * 9.0), 3.0, v);
      plan.cruise(3.0, v_turn);
      plan.turn((j.coin(0.5) ? 1.0 : -1.0) * kPi, ay / (v_turn * v_turn), 1.5);
      plan.cruise(4.0, j.uniform(7.0, 11.0));
    }
  }
  plan.cruise(std::max(1.0, duration - plan.duration()), plan.speed());
  return finish(name, plan, duration, v_start);
}

double default_duration(ManeuverKind kind) {
  switch (kind) {
    case ManeuverKind::city_mix: return 600.0;
    case ManeuverKind::step_steer: return 30.0;
    case ManeuverKind::double_lane_change: return 40.0;
    case ManeuverKind::u_turn: return 40.0;
    case ManeuverKind::slalom: return 40.0;
    case ManeuverKind::constant_radius_ramp: return 60.0;
  }
  return 60.0;
}

}  // namespace

std::string_view to_string(ManeuverKind kind) {
  switch (kind) {
    case ManeuverKind::city_mix: return "city_mix";
    case ManeuverKind::step_steer: return "step_steer";
    case ManeuverKind::double_lane_change: return "double_lane_change";
    case ManeuverKind::u_turn: return "u_turn";
    case ManeuverKind::slalom: return "slalom";
    case ManeuverKind::constant_radius_ramp: return "constant_radius_ramp";
  }
  return "unknown";
}

std::vector<ManeuverKind> all_maneuver_kinds() {
  return {ManeuverKind::city_mix, ManeuverKind::step_steer, ManeuverKind::double_lane_change,
          ManeuverKind::u_turn,   ManeuverKind::slalom,     ManeuverKind::constant_radius_ramp};
}

ManeuverKind parse_maneuver_kind(std::string_view name) {
  for (auto k : all_maneuver_kinds()) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown maneuver kind '" + std::string(name) + "'");
}

double target_peak_lateral_g(double intensity) { return 0.05 + 0.75 * intensity; }

std::string stratum_label(ManeuverKind kind, double intensity) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s@%.2f", std::string(to_string(kind)).c_str(), intensity);
  return buf;
}

ManeuverScript builtin_script(ManeuverKind kind, double intensity, std::optional<double> duration_s,
                              std::uint64_t seed) {
  if (!(intensity > 0.0 && intensity <= 1.0)) {
    throw ValidationError("maneuver intensity must lie in (0, 1]");
  }
  const double duration = duration_s.value_or(default_duration(kind));
  if (!(duration > 0.0)) throw ValidationError("maneuver duration must be positive");
  const double a = target_peak_lateral_g(intensity) * constants::g_mps2;
  const std::string name = stratum_label(kind, intensity);
  Jitter j(seed);
  switch (kind) {
    case ManeuverKind::city_mix: return make_city_mix(a, duration, j, name);
    case ManeuverKind::step_steer: return make_step_steer(a, duration, j, name);
    case ManeuverKind::double_lane_change: return make_double_lane_change(a, duration, j, name);
    case ManeuverKind::u_turn: return make_u_turn(a, duration, j, name);
    case ManeuverKind::slalom: return make_slalom(a, duration, j, name);
    case ManeuverKind::constant_radius_ramp: return make_constant_radius_ramp(a, duration, j, name);
  }
  throw ValidationError("unhandled maneuver kind");
}

}  // namespace vobs
