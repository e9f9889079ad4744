#include "vobs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "vobs/errors.hpp"
#include "vobs/seeding.hpp"

namespace vobs {

std::array<double, kSensorChannels> sensor_channels(const SensorFrame& f) {
  return {f.ax_mps2, f.ay_mps2, f.yaw_rate_radps, f.wheel_speed_rr_mps, f.steering_rad};
}

StateVec state_of(const GroundTruthState& g) { return {g.vx_mps, g.vy_mps, g.yaw_rate_radps}; }

std::array<double, kSensorChannels> ScalerParams::scale_sensors(const SensorFrame& f) const {
  auto raw = sensor_channels(f);
  for (std::size_t c = 0; c < kSensorChannels; ++c) raw[c] = sensor[c].scale(raw[c]);
  return raw;
}

StateVec ScalerParams::scale_state(const StateVec& x) const {
  return {state[0].scale(x[0]), state[1].scale(x[1]), state[2].scale(x[2])};
}

StateVec ScalerParams::unscale_state(const StateVec& s) const {
  return {state[0].unscale(s[0]), state[1].unscale(s[1]), state[2].unscale(s[2])};
}

bool ScalerParams::valid() const {
  auto ok = [](const ChannelRange& r) { return std::isfinite(r.min) && std::isfinite(r.max) && r.max > r.min; };
  return std::all_of(sensor.begin(), sensor.end(), ok) && std::all_of(state.begin(), state.end(), ok);
}

ScalerParams fit_scaler(std::span<const Trajectory> trajectories) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<ChannelRange, kSensorChannels> sensor;
  std::array<ChannelRange, kStateChannels> state;
  sensor.fill({inf, -inf});
  state.fill({inf, -inf});
  std::size_t frames = 0;
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.frames) {
      ++frames;
      const auto raw = sensor_channels(s.sensor);
      for (std::size_t c = 0; c < kSensorChannels; ++c) {
        sensor[c].min = std::min(sensor[c].min, raw[c]);
        sensor[c].max = std::max(sensor[c].max, raw[c]);
      }
      const auto x = state_of(s.truth);
      for (std::size_t c = 0; c < kStateChannels; ++c) {
        state[c].min = std::min(state[c].min, x[c]);
        state[c].max = std::max(state[c].max, x[c]);
      }
    }
  }
  if (frames == 0) throw ValidationError("fit_scaler: no frames to fit");
  for (std::size_t c = 0; c < kSensorChannels; ++c) {
    if (!(sensor[c].max > sensor[c].min)) {
      throw ValidationError(std::string("fit_scaler: sensor channel '") + kSensorChannelNames[c] +
                            "' is constant");
    }
  }
  for (std::size_t c = 0; c < kStateChannels; ++c) {
    if (!(state[c].max > state[c].min)) {
      throw ValidationError(std::string("fit_scaler: state channel '") + kStateChannelNames[c] +
                            "' is constant");
    }
  }
  return {sensor, state};
}

std::size_t window_count(std::size_t n_frames, std::size_t w) {
  const std::size_t first = std::max<std::size_t>(w, 2) - 1;
  return n_frames > first ? n_frames - first : 0;
}

std::vector<WindowedSample> make_windows(const Trajectory& traj, const ScalerParams& scaler,
                                         std::size_t w) {
  if (w == 0) throw ValidationError("make_windows: window length must be positive");
  std::vector<WindowedSample> out;
  const std::size_t n = traj.size();
  const std::size_t count = window_count(n, w);
  if (count == 0) return out;
  out.reserve(count);
  const std::size_t first = std::max<std::size_t>(w, 2) - 1;
  for (std::size_t t = first; t < n; ++t) {
    WindowedSample s;
    s.window.resize(static_cast<Eigen::Index>(w), kSensorChannels);
    for (std::size_t row = 0; row < w; ++row) {
      const auto scaled = scaler.scale_sensors(traj.frames[t + 1 - w + row].sensor);
      for (std::size_t c = 0; c < kSensorChannels; ++c) {
        s.window(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = scaled[c];
      }
    }
    s.prev_state = scaler.scale_state(state_of(traj.frames[t - 1].truth));
    s.target = scaler.scale_state(state_of(traj.frames[t].truth));
    s.t_s = traj.frames[t].truth.t_s;
    out.push_back(std::move(s));
  }
  return out;
}

void WindowedDataset::rebuild_index() {
  index.clear();
  const std::size_t first = std::max<std::size_t>(window_len, 2) - 1;
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    const auto n = static_cast<std::size_t>(sequences[k].sensors_scaled.cols());
    for (std::size_t t = first; t < n; ++t) {
      index.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(t)});
    }
  }
}

WindowedSample WindowedDataset::materialize(std::size_t i) const {
  const WindowRef ref = index.at(i);
  const SequenceData& seq = sequences[ref.sequence];
  const auto w = static_cast<Eigen::Index>(window_len);
  WindowedSample s;
  s.window = seq.sensors_scaled.middleCols(static_cast<Eigen::Index>(ref.t) + 1 - w, w).transpose();
  StateVec prev, target;
  for (std::size_t c = 0; c < kStateChannels; ++c) {
    prev[c] = seq.states(static_cast<Eigen::Index>(c), ref.t - 1);
    target[c] = seq.states(static_cast<Eigen::Index>(c), ref.t);
  }
  s.prev_state = scaler.scale_state(prev);
  s.target = scaler.scale_state(target);
  s.t_s = static_cast<double>(ref.t) * constants::dt_s;
  return s;
}

WindowedDataset build_windowed_dataset(std::span<const Trajectory> trajectories,
                                       const ScalerParams& scaler, std::size_t w) {
  if (w == 0) throw ValidationError("window length must be positive");
  WindowedDataset ds;
  ds.window_len = w;
  ds.scaler = scaler;
  ds.sequences.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    SequenceData seq;
    seq.label = traj.label;
    const auto n = static_cast<Eigen::Index>(traj.size());
    seq.sensors_scaled.resize(kSensorChannels, n);
    seq.states.resize(kStateChannels, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& s = traj.frames[static_cast<std::size_t>(k)];
      const auto scaled = scaler.scale_sensors(s.sensor);
      for (std::size_t c = 0; c < kSensorChannels; ++c) {
        seq.sensors_scaled(static_cast<Eigen::Index>(c), k) = scaled[c];
      }
      const auto x = state_of(s.truth);
      for (std::size_t c = 0; c < kStateChannels; ++c) seq.states(static_cast<Eigen::Index>(c), k) = x[c];
    }
    ds.sequences.push_back(std::move(seq));
  }
  ds.rebuild_index();
  return ds;
}

bool SplitSpec::valid() const {
  return train >= 0 && val >= 0 && test >= 0 && std::abs(train + val + test - 1.0) < 1e-9;
}

SplitAssignment split_dataset(std::span<const Trajectory> trajectories, const SplitSpec& spec) {
  if (!spec.valid()) throw ValidationError("split fractions must be non-negative and sum to 1");
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < trajectories.size(); ++i) strata[trajectories[i].label].push_back(i);
  for (const auto& [label, members] : strata) {
    if (members.size() < 3) {
      throw ValidationError("split_dataset: stratum '" + label + "' has " +
                            std::to_string(members.size()) + " trajectories, need at least 3");
    }
  }
  SplitAssignment out;
  for (auto& [label, members] : strata) {
    std::mt19937_64 rng(derive_seed(spec.seed, label));
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.val * n)));
    std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.test * n)));
    // Keep at least one training trajectory per stratum.
    while (n_val + n_test >= members.size()) (n_val >= n_test ? n_val : n_test) -= 1;
    const std::size_t n_train = members.size() - n_val - n_test;
    for (std::size_t k = 0; k < members.size(); ++k) {
      auto& dst = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
      dst.push_back(members[k]);
    }
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

std::vector<Trajectory> select(std::span<const Trajectory> trajectories,
                               std::span<const std::size_t> indices) {
  std::vector<Trajectory> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(trajectories[i]);
  return out;
}

StateVec inject_state_noise(const StateVec& prev_state, const NoiseSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  const double sd[kStateChannels] = {spec.std_v_mps, spec.std_v_mps, spec.std_yaw_rate_radps};
  StateVec out = prev_state;
  for (std::size_t c = 0; c < kStateChannels; ++c) {
    const double n = unit(rng);
    out[c] += sd[c] * n;
  }
  return out;
}

}  // namespace vobs
