#include "vobs/observer_baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "vobs/errors.hpp"

namespace vobs {
namespace {

struct SlipTerms {
  double alpha_f, alpha_r;
  Eigen::RowVector3d dalpha_f, dalpha_r;  // d/d(vx, vy, r)
};

SlipTerms slip_terms(const Vec3& x, double steering, const VehicleParams& p) {
  const double vx = x(0), vy = x(1), r = x(2);
  const double af = vy + p.lf_m * r;
  const double ar = vy - p.lr_m * r;
  const double nf = af * af + vx * vx;
  const double nr = ar * ar + vx * vx;
  SlipTerms s;
  s.alpha_f = steering - std::atan2(af, vx);
  s.alpha_r = -std::atan2(ar, vx);
  s.dalpha_f << af / nf, -vx / nf, -p.lf_m * vx / nf;
  s.dalpha_r << ar / nr, -vx / nr, p.lr_m * vx / nr;
  return s;
}

Mat3 symmetrize(const Mat3& P) { return 0.5 * (P + P.transpose()); }

}  // namespace

EkfState kf_predict(const EkfState& s, const Vec3& fx, const Mat3& F, const Mat3& Qd) {
  EkfState out;
  out.x = fx;
  out.P = symmetrize(F * s.P * F.transpose() + Qd);
  return out;
}

EkfState kf_update(const EkfState& s, const Vec3& z, const Vec3& hx, const Mat3& H, const Mat3& R) {
  const Mat3 S = symmetrize(H * s.P * H.transpose() + R);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(S, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();
  const double cond = ev.minCoeff() > 0.0 ? ev.maxCoeff() / ev.minCoeff()
                                          : std::numeric_limits<double>::infinity();
  if (!S.allFinite() || !(ev.minCoeff() > 0.0) || cond > 1e15) {
    std::ostringstream os;
    os << "innovation covariance is not invertible: eigenvalues (" << ev(0) << ", " << ev(1)
       << ", " << ev(2) << "), condition number " << cond;
    throw NumericalError(os.str());
  }
  const Eigen::LDLT<Mat3> ldlt(S);
  // K = P H^T S^-1, computed as (S^-1 H P)^T.
  const Mat3 K = ldlt.solve(H * s.P).transpose();
  const Mat3 IKH = Mat3::Identity() - K * H;
  EkfState out;
  out.x = s.x + K * (z - hx);
  out.P = symmetrize(IKH * s.P * IKH.transpose() + K * R * K.transpose());
  return out;
}

EkfConfig EkfConfig::for_vehicle(const VehicleParams& p) {
  EkfConfig c;
  const auto& tf = p.tire_front;
  const auto& tr = p.tire_rear;
  c.cornering_stiffness_front_NpRad =
      tf.stiffness_factor_B * tf.shape_factor_C * tf.peak_factor_D_per_N * p.front_load_N();
  c.cornering_stiffness_rear_NpRad =
      tr.stiffness_factor_B * tr.shape_factor_C * tr.peak_factor_D_per_N * p.rear_load_N();
  return c;
}

bool EkfConfig::valid() const {
  auto positive = [](const Vec3& v) { return v.allFinite() && (v.array() > 0.0).all(); };
  return cornering_stiffness_front_NpRad > 0.0 && cornering_stiffness_rear_NpRad > 0.0 &&
         positive(process_noise_Q) && positive(measurement_noise_R) &&
         positive(initial_covariance_P0) && min_speed_mps >= 0.0;
}

Vec3 bicycle_linear_rates(const Vec3& x, const EkfInput& u, const VehicleParams& p,
                          const EkfConfig& cfg) {
  const SlipTerms s = slip_terms(x, u.steering_rad, p);
  const double fyf = cfg.cornering_stiffness_front_NpRad * s.alpha_f;
  const double fyr = cfg.cornering_stiffness_rear_NpRad * s.alpha_r;
  const double cd = std::cos(u.steering_rad);
  const double vx = x(0), vy = x(1), r = x(2);
  return {u.ax_mps2 + r * vy, (fyf * cd + fyr) / p.mass_kg - r * vx,
          (p.lf_m * fyf * cd - p.lr_m * fyr) / p.inertia_z_kgm2};
}

Mat3 bicycle_linear_rates_jacobian(const Vec3& x, const EkfInput& u, const VehicleParams& p,
                                   const EkfConfig& cfg) {
  const SlipTerms s = slip_terms(x, u.steering_rad, p);
  const double cd = std::cos(u.steering_rad);
  const Eigen::RowVector3d dfyf = cfg.cornering_stiffness_front_NpRad * s.dalpha_f;
  const Eigen::RowVector3d dfyr = cfg.cornering_stiffness_rear_NpRad * s.dalpha_r;
  const double vx = x(0), vy = x(1), r = x(2);
  Mat3 J;
  J.row(0) << 0.0, r, vy;
  J.row(1) = (dfyf * cd + dfyr) / p.mass_kg;
  J(1, 0) -= r;
  J(1, 2) -= vx;
  J.row(2) = (p.lf_m * cd * dfyf - p.lr_m * dfyr) / p.inertia_z_kgm2;
  return J;
}

Vec3 ekf_transition(const Vec3& x, const EkfInput& u, const VehicleParams& p, const EkfConfig& cfg,
                    double dt) {
  return x + dt * bicycle_linear_rates(x, u, p, cfg);
}

Mat3 ekf_transition_jacobian(const Vec3& x, const EkfInput& u, const VehicleParams& p,
                             const EkfConfig& cfg, double dt) {
  return Mat3::Identity() + dt * bicycle_linear_rates_jacobian(x, u, p, cfg);
}

Vec3 ekf_measurement(const Vec3& x, double steering_rad, const VehicleParams& p,
                     const EkfConfig& cfg) {
  const SlipTerms s = slip_terms(x, steering_rad, p);
  const double fyf = cfg.cornering_stiffness_front_NpRad * s.alpha_f;
  const double fyr = cfg.cornering_stiffness_rear_NpRad * s.alpha_r;
  return {x(0) + 0.5 * p.track_m * x(2), x(2), (fyf * std::cos(steering_rad) + fyr) / p.mass_kg};
}

Mat3 ekf_measurement_jacobian(const Vec3& x, double steering_rad, const VehicleParams& p,
                              const EkfConfig& cfg) {
  const SlipTerms s = slip_terms(x, steering_rad, p);
  Mat3 H;
  H.row(0) << 1.0, 0.0, 0.5 * p.track_m;
  H.row(1) << 0.0, 0.0, 1.0;
  H.row(2) = (cfg.cornering_stiffness_front_NpRad * std::cos(steering_rad) * s.dalpha_f +
              cfg.cornering_stiffness_rear_NpRad * s.dalpha_r) /
             p.mass_kg;
  return H;
}

EkfState ekf_predict(const EkfState& s, const EkfInput& u, const VehicleParams& p,
                     const EkfConfig& cfg, double dt) {
  if (!(dt >= 0.0)) throw ValidationError("ekf_predict: dt must be non-negative");
  const Mat3 Qd = (dt * cfg.process_noise_Q).asDiagonal();
  if (!(s.x(0) > cfg.min_speed_mps)) {
    EkfState held = s;
    held.P = symmetrize(s.P + Qd);
    held.held_low_speed = true;
    return held;
  }
  return kf_predict(s, ekf_transition(s.x, u, p, cfg, dt),
                    ekf_transition_jacobian(s.x, u, p, cfg, dt), Qd);
}

EkfState ekf_update(const EkfState& s, const EkfMeasurement& z, double steering_rad,
                    const VehicleParams& p, const EkfConfig& cfg) {
  const Vec3 zv(z.wheel_speed_mps, z.yaw_rate_radps, z.ay_mps2);
  const Mat3 R = cfg.measurement_noise_R.asDiagonal();
  EkfState out = kf_update(s, zv, ekf_measurement(s.x, steering_rad, p, cfg),
                           ekf_measurement_jacobian(s.x, steering_rad, p, cfg), R);
  out.held_low_speed = s.held_low_speed;
  return out;
}

EkfState ekf_initial_state(const StateVec& x0, const EkfConfig& cfg) {
  EkfState s;
  s.x = Vec3(x0[0], x0[1], x0[2]);
  s.P = cfg.initial_covariance_P0.asDiagonal();
  return s;
}

EstimateTrace run_ekf(std::span<const SensorFrame> frames, const EkfState& initial,
                      const VehicleParams& p, const EkfConfig& cfg, std::size_t* held_steps) {
  if (frames.empty()) throw ValidationError("run_ekf: no frames");
  if (!cfg.valid()) throw ValidationError("run_ekf: invalid EKF configuration");
  EstimateTrace tr;
  tr.warmup_len = 0;
  tr.t_s.reserve(frames.size());
  tr.estimates.reserve(frames.size());
  EkfState s = initial;
  std::size_t held = 0;
  auto record = [&](const SensorFrame& f) {
    tr.t_s.push_back(f.t_s);
    tr.estimates.push_back({s.x(0), s.x(1), s.x(2)});
  };
  record(frames[0]);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const SensorFrame& prev = frames[k - 1];
    const SensorFrame& cur = frames[k];
    try {
      s = ekf_predict(s, {prev.ax_mps2, prev.steering_rad}, p, cfg, cur.t_s - prev.t_s);
      if (s.held_low_speed) ++held;
      s = ekf_update(s, {cur.wheel_speed_rr_mps, cur.yaw_rate_radps, cur.ay_mps2},
                     cur.steering_rad, p, cfg);
    } catch (const NumericalError& e) {
      throw NumericalError("EKF failed at frame " + std::to_string(k) + " (t=" +
                           std::to_string(cur.t_s) + " s): " + e.what());
    }
    s.held_low_speed = false;
    if (!s.x.allFinite())
      throw NumericalError("EKF state became non-finite at frame " + std::to_string(k));
    record(cur);
  }
  if (held_steps) *held_steps = held;
  return tr;
}

GruTraining train_gru(const WindowedDataset& train, const WindowedDataset& val,
                      const TrainConfig& tc, const neural::Architecture& arch,
                      const ResumeState<neural::GruLayerWeights>* resume,
                      const EpochCallback& on_epoch) {
  if (arch.feedback_dim != 0) throw ValidationError("GRU baseline has no state feedback input");
  const auto init = neural::GruWeights::initialize(arch, tc.seed);
  auto result = train_network(init, train, val, NoiseSpec::none(), tc, resume, on_epoch);
  return {result.best, std::move(result)};
}

EstimateTrace run_gru(std::span<const SensorFrame> frames, const neural::GruWeights& w,
                      const ScalerParams& scaler, std::size_t window_len,
                      const StateVec& pad_state) {
  if (window_len == 0 || frames.size() < window_len)
    throw ValidationError("GRU observer needs at least " + std::to_string(window_len) + " frames");
  EstimateTrace tr;
  tr.warmup_len = window_len - 1;
  for (const auto& f : frames) tr.t_s.push_back(f.t_s);
  tr.estimates.assign(window_len - 1, pad_state);
  const Eigen::MatrixXd features = window_features(w, scale_frames(frames, scaler), window_len);
  const Eigen::MatrixXd out = neural::head_forward(w, features, Eigen::MatrixXd());
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    StateVec s{out(0, k), out(1, k), out(2, k)};
    tr.estimates.push_back(scaler.unscale_state(s));
  }
  return tr;
}

}  // namespace vobs
