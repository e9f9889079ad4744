#pragma once

#include <Eigen/Core>
#include <span>

#include "vobs/domain.hpp"
#include "vobs/observer_lstm.hpp"

namespace vobs {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Generic three-state Kalman core. Both the bicycle EKF and the linear test
// systems go through these two functions.

struct EkfState {
  Vec3 x = Vec3::Zero();  // (vx, vy, yaw_rate)
  Mat3 P = Mat3::Identity();
  // Set by ekf_predict when the low-speed guard froze the state.
  bool held_low_speed = false;
};

// x <- fx, P <- F P F^T + Qd, symmetrized.
EkfState kf_predict(const EkfState& s, const Vec3& fx, const Mat3& F, const Mat3& Qd);

// Standard gain with Joseph-form covariance update. Throws NumericalError
// with the innovation covariance eigenvalues when it is not safely invertible.
EkfState kf_update(const EkfState& s, const Vec3& z, const Vec3& hx, const Mat3& H, const Mat3& R);

// ---------------------------------------------------------------------------
// Dynamic bicycle model with linear tires.

struct EkfConfig {
  double cornering_stiffness_front_NpRad = 0.0;
  double cornering_stiffness_rear_NpRad = 0.0;
  // Process noise as a rate: the covariance grows by Q*dt per prediction.
  Vec3 process_noise_Q{0.01, 0.01, 0.001};
  Vec3 measurement_noise_R{9e-4, 4e-6, 2.5e-3};
  Vec3 initial_covariance_P0{0.01, 0.01, 1e-4};
  double min_speed_mps = 0.5;

  // Stiffness from the magic-formula slope at zero slip, B*C*D*Fz per axle.
  static EkfConfig for_vehicle(const VehicleParams& p);
  bool valid() const;
};

struct EkfInput {
  double ax_mps2 = 0.0;
  double steering_rad = 0.0;
};

// Measurement (wheel_speed_rr, yaw_rate gyro, ay).
struct EkfMeasurement {
  double wheel_speed_mps = 0.0;
  double yaw_rate_radps = 0.0;
  double ay_mps2 = 0.0;
};

// Continuous-time model f(x, u) and its Jacobian.
Vec3 bicycle_linear_rates(const Vec3& x, const EkfInput& u, const VehicleParams& p,
                          const EkfConfig& cfg);
Mat3 bicycle_linear_rates_jacobian(const Vec3& x, const EkfInput& u, const VehicleParams& p,
                                   const EkfConfig& cfg);

// Euler-discretized map x + dt*f(x, u) and its Jacobian I + dt*df/dx.
Vec3 ekf_transition(const Vec3& x, const EkfInput& u, const VehicleParams& p, const EkfConfig& cfg,
                    double dt);
Mat3 ekf_transition_jacobian(const Vec3& x, const EkfInput& u, const VehicleParams& p,
                             const EkfConfig& cfg, double dt);

// h(x) = (vx + track/2 * r, r, (Fyf cos(delta) + Fyr)/M); steering enters via Fyf.
Vec3 ekf_measurement(const Vec3& x, double steering_rad, const VehicleParams& p,
                     const EkfConfig& cfg);
Mat3 ekf_measurement_jacobian(const Vec3& x, double steering_rad, const VehicleParams& p,
                              const EkfConfig& cfg);

// Below cfg.min_speed_mps the state is held and P grows by Q*dt.
EkfState ekf_predict(const EkfState& s, const EkfInput& u, const VehicleParams& p,
                     const EkfConfig& cfg, double dt);
EkfState ekf_update(const EkfState& s, const EkfMeasurement& z, double steering_rad,
                    const VehicleParams& p, const EkfConfig& cfg);

EkfState ekf_initial_state(const StateVec& x0, const EkfConfig& cfg);

// Frame 0 reports the initial state; each later frame k predicts with the
// inputs of frame k-1 over their time gap, then updates with frame k.
EstimateTrace run_ekf(std::span<const SensorFrame> frames, const EkfState& initial,
                      const VehicleParams& p, const EkfConfig& cfg,
                      std::size_t* held_steps = nullptr);

// ---------------------------------------------------------------------------
// End-to-end GRU observer: the window alone maps to the state.

struct GruTraining {
  neural::GruWeights weights;
  TrainResult<neural::GruLayerWeights> result;
};

GruTraining train_gru(const WindowedDataset& train, const WindowedDataset& val,
                      const TrainConfig& tc,
                      const neural::Architecture& arch = neural::Architecture::end_to_end(),
                      const ResumeState<neural::GruLayerWeights>* resume = nullptr,
                      const EpochCallback& on_epoch = {});

// The first window_len-1 entries repeat `pad_state` so the trace stays aligned
// with the frames; they are excluded from evaluation as warm-up.
EstimateTrace run_gru(std::span<const SensorFrame> frames, const neural::GruWeights& w,
                      const ScalerParams& scaler, std::size_t window_len = kDefaultWindow,
                      const StateVec& pad_state = {});

}  // namespace vobs
