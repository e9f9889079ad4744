#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vobs/domain.hpp"

namespace vobs {

inline constexpr std::size_t kSensorChannels = 5;
inline constexpr std::size_t kStateChannels = 3;
inline constexpr std::size_t kDefaultWindow = 50;

// Observer state: (vx, vy, yaw_rate) in m/s, m/s, rad/s.
using StateVec = std::array<double, kStateChannels>;

inline constexpr std::array<const char*, kSensorChannels> kSensorChannelNames = {
    "ax", "ay", "yaw_rate", "wheel_speed_rr", "steering"};
inline constexpr std::array<const char*, kStateChannels> kStateChannelNames = {"vx", "vy",
                                                                               "yaw_rate"};

std::array<double, kSensorChannels> sensor_channels(const SensorFrame& f);
StateVec state_of(const GroundTruthState& g);

struct ChannelRange {
  double min = 0.0;
  double max = 1.0;

  double scale(double x) const { return (x - min) / (max - min); }
  double unscale(double s) const { return min + s * (max - min); }
  double span() const { return max - min; }
};

// Min-max scaling to [0, 1]; values outside the fitted range are not clipped.
struct ScalerParams {
  std::array<ChannelRange, kSensorChannels> sensor{};
  std::array<ChannelRange, kStateChannels> state{};

  std::array<double, kSensorChannels> scale_sensors(const SensorFrame& f) const;
  StateVec scale_state(const StateVec& x) const;
  StateVec unscale_state(const StateVec& s) const;
  bool valid() const;
};

// Per-channel min/max over every frame. Sensor channels come from the sensor
// frames, state channels from the ground truth. Throws ValidationError naming
// the channel when one is constant.
ScalerParams fit_scaler(std::span<const Trajectory> trajectories);

struct WindowedSample {
  Eigen::MatrixXd window;  // window_len x 5, oldest row first, scaled
  StateVec prev_state{};   // truth at t-1, scaled
  StateVec target{};       // truth at t, scaled
  double t_s = 0.0;        // timestamp of the target
};

// One sample per t in [max(w-1, 1), N-1]. Too-short trajectories yield none.
std::vector<WindowedSample> make_windows(const Trajectory& traj, const ScalerParams& scaler,
                                         std::size_t w = kDefaultWindow);

std::size_t window_count(std::size_t n_frames, std::size_t w);

// Column-major scaled sensors and physical states of one trajectory; the
// trainer gathers windows from these without materializing them.
struct SequenceData {
  std::string label;
  Eigen::MatrixXd sensors_scaled;  // 5 x N
  Eigen::MatrixXd states;          // 3 x N, physical units
};

struct WindowRef {
  std::uint32_t sequence = 0;
  std::uint32_t t = 0;  // index of the target frame
};

struct WindowedDataset {
  std::size_t window_len = kDefaultWindow;
  ScalerParams scaler{};
  std::vector<SequenceData> sequences;
  std::vector<WindowRef> index;

  std::size_t size() const { return index.size(); }
  void rebuild_index();
  WindowedSample materialize(std::size_t i) const;
};

WindowedDataset build_windowed_dataset(std::span<const Trajectory> trajectories,
                                       const ScalerParams& scaler, std::size_t w = kDefaultWindow);

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;

  bool valid() const;
};

// Indices into the input trajectory list.
struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Trajectory-level split stratified by label. Every stratum needs at least
// three trajectories so each set gets one.
SplitAssignment split_dataset(std::span<const Trajectory> trajectories, const SplitSpec& spec);

std::vector<Trajectory> select(std::span<const Trajectory> trajectories,
                               std::span<const std::size_t> indices);

struct NoiseSpec {
  double std_v_mps = 0.03;
  double std_yaw_rate_radps = 0.003;
  std::uint64_t seed = 0;

  static NoiseSpec none() { return {0.0, 0.0, 0}; }
  bool valid() const { return std_v_mps >= 0.0 && std_yaw_rate_radps >= 0.0; }
};

// Adds N(0, std) per channel in physical units. Draw order: vx, vy, yaw_rate.
StateVec inject_state_noise(const StateVec& prev_state, const NoiseSpec& spec, std::mt19937_64& rng);

}  // namespace vobs
