#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "vobs/dataset.hpp"
#include "vobs/neural/network.hpp"
#include "vobs/training.hpp"

namespace vobs {

// Sensor channels (ax, ay, yaw_rate, wheel_speed_rr, steering) and state
// channels (vx, vy, yaw_rate) are fixed; see kSensorChannelNames/kStateChannelNames.
struct ObserverConfig {
  std::size_t window_len = kDefaultWindow;
  NoiseSpec noise{};
  ScalerParams scaler{};

  bool valid() const { return window_len >= 1 && noise.valid() && scaler.valid(); }
};

// Per-step estimates in physical units, aligned with the input frames.
struct EstimateTrace {
  std::vector<double> t_s;
  std::vector<StateVec> estimates;
  std::size_t warmup_len = 0;

  std::size_t size() const { return estimates.size(); }
};

struct ObserverTraining {
  neural::NetworkWeights weights;
  TrainResult<neural::LstmLayerWeights> result;
};

// Noise-injected teacher forcing; the returned weights are the best
// validation-loss epoch.
ObserverTraining train_observer(const WindowedDataset& train, const WindowedDataset& val,
                                const ObserverConfig& cfg, const TrainConfig& tc,
                                const neural::Architecture& arch = neural::Architecture::observer(),
                                const ResumeState<neural::LstmLayerWeights>* resume = nullptr,
                                const EpochCallback& on_epoch = {});

// window: the last window_len frames, oldest first.
StateVec estimate_step(std::span<const SensorFrame> window, const StateVec& prev_estimate,
                       const neural::NetworkWeights& w, const ObserverConfig& cfg);

// Emits initial_state for the first window_len-1 frames, then feeds each
// estimate back as the next step's previous state. Throws ValidationError when
// fewer than window_len frames are given.
EstimateTrace run_closed_loop(std::span<const SensorFrame> frames, const StateVec& initial_state,
                              const neural::NetworkWeights& w, const ObserverConfig& cfg);

// Same layout, but the previous state fed at step t is truth[t-1].
EstimateTrace run_teacher_forced(std::span<const SensorFrame> frames,
                                 std::span<const GroundTruthState> truth,
                                 const neural::NetworkWeights& w, const ObserverConfig& cfg);

// Scaled sensor matrix (5 x N) and the top-layer recurrent features of every
// full window (H x (N - window_len + 1)).
Eigen::MatrixXd scale_frames(std::span<const SensorFrame> frames, const ScalerParams& scaler);
template <typename Layer>
Eigen::MatrixXd window_features(const neural::RecurrentNetwork<Layer>& w,
                                const Eigen::MatrixXd& sensors_scaled, std::size_t window_len);

// CSV columns: t,vx_est,vy_est,yaw_rate_est
void write_trace_csv(const EstimateTrace& trace, const std::filesystem::path& path);
EstimateTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace vobs
