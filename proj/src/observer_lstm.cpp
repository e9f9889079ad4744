#include "vobs/observer_lstm.hpp"

#include <fstream>

#include "vobs/errors.hpp"
#include "vobs/text_format.hpp"

namespace vobs {
namespace {

using neural::Index;

constexpr std::size_t kFeatureChunk = 256;

void check_config(const ObserverConfig& cfg) {
  if (!cfg.valid()) throw ValidationError("invalid observer configuration");
}

EstimateTrace warmup_trace(std::span<const SensorFrame> frames, const StateVec& initial,
                           std::size_t w) {
  if (frames.size() < w)
    throw ValidationError("observer needs at least " + std::to_string(w) + " frames, got " +
                          std::to_string(frames.size()));
  EstimateTrace tr;
  tr.warmup_len = w - 1;
  tr.t_s.reserve(frames.size());
  for (const auto& f : frames) tr.t_s.push_back(f.t_s);
  tr.estimates.assign(w - 1, initial);
  tr.estimates.reserve(frames.size());
  return tr;
}

// Shared by closed-loop and teacher-forced runs: the recurrent features of a
// window do not depend on the fed-back state, so only the head runs per step.
template <typename PrevFn>
EstimateTrace run_with_feedback(std::span<const SensorFrame> frames, const StateVec& initial,
                                const neural::NetworkWeights& w, const ObserverConfig& cfg,
                                PrevFn&& prev_for_step) {
  check_config(cfg);
  EstimateTrace tr = warmup_trace(frames, initial, cfg.window_len);
  const Eigen::MatrixXd features =
      window_features(w, scale_frames(frames, cfg.scaler), cfg.window_len);
  Eigen::MatrixXd fb(static_cast<Index>(kStateChannels), 1);
  for (Index k = 0; k < features.cols(); ++k) {
    const std::size_t t = cfg.window_len - 1 + static_cast<std::size_t>(k);
    const StateVec prev = prev_for_step(t, tr);
    const StateVec ps = cfg.scaler.scale_state(prev);
    for (std::size_t c = 0; c < kStateChannels; ++c) fb(static_cast<Index>(c), 0) = ps[c];
    const Eigen::MatrixXd out = neural::head_forward(w, features.col(k), fb);
    StateVec s{};
    for (std::size_t c = 0; c < kStateChannels; ++c) s[c] = out(static_cast<Index>(c), 0);
    tr.estimates.push_back(cfg.scaler.unscale_state(s));
  }
  return tr;
}

}  // namespace

Eigen::MatrixXd scale_frames(std::span<const SensorFrame> frames, const ScalerParams& scaler) {
  Eigen::MatrixXd m(static_cast<Index>(kSensorChannels), static_cast<Index>(frames.size()));
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto s = scaler.scale_sensors(frames[k]);
    for (std::size_t c = 0; c < kSensorChannels; ++c)
      m(static_cast<Index>(c), static_cast<Index>(k)) = s[c];
  }
  return m;
}

template <typename Layer>
Eigen::MatrixXd window_features(const neural::RecurrentNetwork<Layer>& w,
                                const Eigen::MatrixXd& sensors_scaled, std::size_t window_len) {
  const auto wl = static_cast<Index>(window_len);
  const Index n_windows = sensors_scaled.cols() - wl + 1;
  if (n_windows <= 0) return {};
  const Index hidden = w.recurrent_stack.back().hidden();
  Eigen::MatrixXd features(hidden, n_windows);
  const auto chunk = static_cast<Index>(kFeatureChunk);
  for (Index a = 0; a < n_windows; a += chunk) {
    const Index b = std::min(n_windows, a + chunk) - a;
    Eigen::MatrixXd inputs(sensors_scaled.rows(), wl * b);
    for (Index j = 0; j < b; ++j)
      for (Index s = 0; s < wl; ++s) inputs.col(s * b + j) = sensors_scaled.col(a + j + s);
    features.middleCols(a, b) = neural::recurrent_features(w, inputs, wl, b);
  }
  return features;
}

ObserverTraining train_observer(const WindowedDataset& train, const WindowedDataset& val,
                                const ObserverConfig& cfg, const TrainConfig& tc,
                                const neural::Architecture& arch,
                                const ResumeState<neural::LstmLayerWeights>* resume,
                                const EpochCallback& on_epoch) {
  check_config(cfg);
  if (arch.feedback_dim != static_cast<Index>(kStateChannels))
    throw ValidationError("observer network needs a 3-wide state feedback input");
  if (train.window_len != cfg.window_len || val.window_len != cfg.window_len)
    throw ValidationError("dataset window length differs from the observer configuration");
  const auto init = neural::NetworkWeights::initialize(arch, tc.seed);
  auto result = train_network(init, train, val, cfg.noise, tc, resume, on_epoch);
  return {result.best, std::move(result)};
}

StateVec estimate_step(std::span<const SensorFrame> window, const StateVec& prev_estimate,
                       const neural::NetworkWeights& w, const ObserverConfig& cfg) {
  check_config(cfg);
  if (window.size() != cfg.window_len)
    throw ValidationError("estimate_step needs exactly " + std::to_string(cfg.window_len) +
                          " frames");
  const Eigen::MatrixXd win = scale_frames(window, cfg.scaler).transpose();
  const StateVec ps = cfg.scaler.scale_state(prev_estimate);
  Eigen::VectorXd fb(static_cast<Index>(kStateChannels));
  for (std::size_t c = 0; c < kStateChannels; ++c) fb(static_cast<Index>(c)) = ps[c];
  const Eigen::VectorXd out = neural::forward_full(w, win, fb);
  StateVec s{};
  for (std::size_t c = 0; c < kStateChannels; ++c) s[c] = out(static_cast<Index>(c));
  return cfg.scaler.unscale_state(s);
}

EstimateTrace run_closed_loop(std::span<const SensorFrame> frames, const StateVec& initial_state,
                              const neural::NetworkWeights& w, const ObserverConfig& cfg) {
  return run_with_feedback(frames, initial_state, w, cfg,
                           [&](std::size_t t, const EstimateTrace& tr) {
                             return t == 0 ? initial_state : tr.estimates[t - 1];
                           });
}

EstimateTrace run_teacher_forced(std::span<const SensorFrame> frames,
                                 std::span<const GroundTruthState> truth,
                                 const neural::NetworkWeights& w, const ObserverConfig& cfg) {
  if (truth.size() != frames.size())
    throw ValidationError("teacher-forced run needs one truth state per frame");
  if (frames.empty()) throw ValidationError("teacher-forced run needs frames");
  return run_with_feedback(frames, state_of(truth.front()), w, cfg,
                           [&](std::size_t t, const EstimateTrace&) {
                             return state_of(truth[t == 0 ? 0 : t - 1]);
                           });
}

void write_trace_csv(const EstimateTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path.string());
  out << "t,vx_est,vy_est,yaw_rate_est\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& e = trace.estimates[k];
    out << text::format_double(trace.t_s[k]) << ',' << text::format_double(e[0]) << ','
        << text::format_double(e[1]) << ',' << text::format_double(e[2]) << '\n';
  }
  if (!out) throw IoError("failed writing trace " + path.string());
}

EstimateTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "t,vx_est,vy_est,yaw_rate_est")
    throw IoError(path.string() + ": unexpected trace header");
  EstimateTrace tr;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 4) throw IoError(path.string() + ": row " + std::to_string(row) + " needs 4 fields");
    try {
      tr.t_s.push_back(text::parse_double(f[0]));
      tr.estimates.push_back({text::parse_double(f[1]), text::parse_double(f[2]), text::parse_double(f[3])});
    } catch (const ValidationError& e) {
      throw IoError(path.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
  }
  return tr;
}

template Eigen::MatrixXd window_features(const neural::RecurrentNetwork<neural::LstmLayerWeights>&,
                                         const Eigen::MatrixXd&, std::size_t);
template Eigen::MatrixXd window_features(const neural::RecurrentNetwork<neural::GruLayerWeights>&,
                                         const Eigen::MatrixXd&, std::size_t);

}  // namespace vobs
