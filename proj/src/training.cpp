#include "vobs/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "vobs/errors.hpp"
#include "vobs/seeding.hpp"
#include "vobs/text_format.hpp"

namespace vobs {
namespace {

using neural::Index;
using neural::RecurrentNetwork;
using neural::SequenceBatch;

constexpr std::size_t kEvalChunk = 512;

// Contiguous partition of [0, n) into at most `parts` non-empty ranges.
std::vector<std::pair<std::size_t, std::size_t>> partition(std::size_t n, int parts) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(parts), 1, std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t a = n * i / k, b = n * (i + 1) / k;
    if (b > a) out.emplace_back(a, b);
  }
  return out;
}

template <typename Fn>
void run_parallel(std::size_t jobs, Fn&& fn) {
  if (jobs <= 1) {
    if (jobs == 1) fn(0);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(jobs);
  threads.reserve(jobs - 1);
  for (std::size_t j = 1; j < jobs; ++j)
    threads.emplace_back([&, j] {
      try {
        fn(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  try {
    fn(0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename Layer>
double batch_sse(const RecurrentNetwork<Layer>& net, const WindowedDataset& data,
                 std::span<const std::size_t> order) {
  const SequenceBatch b = gather_batch(data, order, net.feedback_dim > 0, nullptr);
  const auto pred = neural::forward(net, b.inputs, b.steps, b.feedback);
  return (pred - b.targets).squaredNorm();
}

std::vector<std::size_t> strided(std::size_t n, int stride, std::size_t offset) {
  std::vector<std::size_t> idx;
  const auto s = static_cast<std::size_t>(stride);
  idx.reserve(n / s + 1);
  for (std::size_t i = 0; i < n; ++i)
    if ((i + offset) % s == 0) idx.push_back(i);
  return idx;
}

}  // namespace

SequenceBatch gather_batch(const WindowedDataset& data, std::span<const std::size_t> order,
                           bool with_feedback, const Eigen::MatrixXd* feedback_noise) {
  const auto w = static_cast<Index>(data.window_len);
  const auto n = static_cast<Index>(order.size());
  SequenceBatch b;
  b.steps = w;
  b.size = n;
  b.inputs.resize(static_cast<Index>(kSensorChannels), w * n);
  b.targets.resize(static_cast<Index>(kStateChannels), n);
  if (with_feedback) b.feedback.resize(static_cast<Index>(kStateChannels), n);
  for (Index j = 0; j < n; ++j) {
    const WindowRef ref = data.index.at(order[static_cast<std::size_t>(j)]);
    const SequenceData& seq = data.sequences[ref.sequence];
    const Index first = static_cast<Index>(ref.t) + 1 - w;
    for (Index s = 0; s < w; ++s) b.inputs.col(s * n + j) = seq.sensors_scaled.col(first + s);
    StateVec target{}, prev{};
    for (std::size_t c = 0; c < kStateChannels; ++c) {
      target[c] = seq.states(static_cast<Index>(c), ref.t);
      prev[c] = seq.states(static_cast<Index>(c), ref.t - 1);
      if (feedback_noise) prev[c] += (*feedback_noise)(static_cast<Index>(c), j);
    }
    const StateVec ts = data.scaler.scale_state(target);
    for (std::size_t c = 0; c < kStateChannels; ++c) b.targets(static_cast<Index>(c), j) = ts[c];
    if (with_feedback) {
      const StateVec ps = data.scaler.scale_state(prev);
      for (std::size_t c = 0; c < kStateChannels; ++c) b.feedback(static_cast<Index>(c), j) = ps[c];
    }
  }
  return b;
}

template <typename Layer>
double evaluate_loss(const RecurrentNetwork<Layer>& net, const WindowedDataset& data, int stride,
                     int workers) {
  const auto idx = strided(data.size(), std::max(stride, 1), 0);
  if (idx.empty()) throw ValidationError("evaluate_loss: empty dataset");
  const std::size_t chunks = (idx.size() + kEvalChunk - 1) / kEvalChunk;
  std::vector<double> sse(chunks, 0.0);
  const auto parts = partition(chunks, workers);
  run_parallel(parts.size(), [&](std::size_t p) {
    for (std::size_t c = parts[p].first; c < parts[p].second; ++c) {
      const std::size_t a = c * kEvalChunk, b = std::min(idx.size(), a + kEvalChunk);
      sse[c] = batch_sse(net, data, std::span(idx).subspan(a, b - a));
    }
  });
  const double total = std::accumulate(sse.begin(), sse.end(), 0.0);
  return total / static_cast<double>(idx.size() * static_cast<std::size_t>(net.output_dim()));
}

template <typename Layer>
TrainResult<Layer> train_network(const RecurrentNetwork<Layer>& init, const WindowedDataset& train,
                                 const WindowedDataset& val, const NoiseSpec& noise,
                                 const TrainConfig& tc, const ResumeState<Layer>* resume,
                                 const EpochCallback& on_epoch) {
  if (!tc.valid()) throw ValidationError("invalid training configuration");
  if (!noise.valid()) throw ValidationError("noise standard deviations must be non-negative");
  if (train.size() == 0) throw ValidationError("training set has no windows");
  if (val.size() == 0) throw ValidationError("validation set has no windows");
  init.validate();

  const bool with_feedback = init.feedback_dim > 0;
  const bool noisy = with_feedback && (noise.std_v_mps > 0.0 || noise.std_yaw_rate_radps > 0.0);

  TrainResult<Layer> result{init, init, neural::AdamState<RecurrentNetwork<Layer>>::for_weights(init), {}, 0, 0.0};
  int first_epoch = 1;
  if (resume) {
    result.last = resume->net;
    result.optimizer = resume->optimizer;
    result.log = resume->log;
    first_epoch = resume->epochs_completed + 1;
  }
  RecurrentNetwork<Layer>& net = result.last;
  net.validate();

  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : result.log)
    if (e.epoch >= 1 && e.val_loss < best) best = e.val_loss;
  if (resume && std::isfinite(best)) {
    result.best = resume->best ? *resume->best : resume->net;
    result.best_val_loss = best;
    for (const auto& e : result.log)
      if (e.epoch >= 1 && e.val_loss == best) {
        result.best_epoch = e.epoch;
        break;
      }
  }

  if (!resume) {
    EpochLog e0{0, evaluate_loss(net, train, tc.window_stride, tc.workers),
                evaluate_loss(net, val, tc.val_stride, tc.workers)};
    result.log.push_back(e0);
    if (on_epoch) on_epoch(e0);
  }

  const Index out_dim = net.output_dim();
  std::vector<RecurrentNetwork<Layer>> worker_grads;
  RecurrentNetwork<Layer> grad = net.zeros_like();

  for (int epoch = first_epoch; epoch < first_epoch + tc.epochs; ++epoch) {
    result.optimizer.hyper.lr = tc.learning_rate_at(epoch);
    auto order = strided(train.size(), tc.window_stride, static_cast<std::size_t>(epoch));
    if (tc.shuffle) {
      std::mt19937_64 shuffle_rng(derive_seed(tc.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    std::mt19937_64 noise_rng(derive_seed(noise.seed, "state_noise", static_cast<std::uint64_t>(epoch)));

    double epoch_sse = 0.0;
    const auto bs = static_cast<std::size_t>(tc.batch_size);
    const std::size_t batches = (order.size() + bs - 1) / bs;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const std::size_t a = bi * bs, n = std::min(order.size(), a + bs) - a;
      const auto slice = std::span<const std::size_t>(order).subspan(a, n);

      Eigen::MatrixXd noise_draws;
      if (noisy) {
        noise_draws.resize(static_cast<Index>(kStateChannels), static_cast<Index>(n));
        for (Index j = 0; j < noise_draws.cols(); ++j) {
          const StateVec d = inject_state_noise(StateVec{}, noise, noise_rng);
          for (std::size_t c = 0; c < kStateChannels; ++c) noise_draws(static_cast<Index>(c), j) = d[c];
        }
      }

      const double scale = 1.0 / static_cast<double>(n * static_cast<std::size_t>(out_dim));
      const auto parts = partition(n, tc.workers);
      worker_grads.resize(parts.size(), net.zeros_like());
      std::vector<double> sse(parts.size(), 0.0);
      try {
        run_parallel(parts.size(), [&](std::size_t p) {
          const auto [lo, hi] = parts[p];
          Eigen::MatrixXd part_noise;
          if (noisy) part_noise = noise_draws.middleCols(static_cast<Index>(lo), static_cast<Index>(hi - lo));
          const SequenceBatch b =
              gather_batch(train, slice.subspan(lo, hi - lo), with_feedback, noisy ? &part_noise : nullptr);
          worker_grads[p].set_zero();
          sse[p] = neural::accumulate_gradient(net, b, worker_grads[p], scale);
        });
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(bi) + ": " + e.what());
      }

      // Fixed-order reduction keeps results independent of thread timing.
      grad.set_zero();
      auto gv = neural::param_views(grad);
      double batch_sse_total = 0.0;
      for (std::size_t p = 0; p < parts.size(); ++p) {
        batch_sse_total += sse[p];
        auto wv = neural::param_views(worker_grads[p]);
        for (std::size_t k = 0; k < gv.size(); ++k)
          for (std::size_t i = 0; i < gv[k].values.size(); ++i) gv[k].values[i] += wv[k].values[i];
      }
      if (!std::isfinite(batch_sse_total))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(bi) + ": non-finite loss");
      epoch_sse += batch_sse_total;
      neural::adam_step(net, grad, result.optimizer);
    }

    EpochLog e{epoch,
               epoch_sse / static_cast<double>(order.size() * static_cast<std::size_t>(out_dim)),
               evaluate_loss(net, val, tc.val_stride, tc.workers)};
    if (!std::isfinite(e.val_loss))
      throw NumericalError("validation loss became non-finite at epoch " + std::to_string(epoch));
    result.log.push_back(e);
    if (e.val_loss < best) {
      best = e.val_loss;
      result.best = net;
      result.best_epoch = epoch;
      result.best_val_loss = best;
    }
    if (on_epoch) on_epoch(e);
  }
  return result;
}

void write_training_log_csv(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : log)
    out << e.epoch << ',' << text::format_double(e.train_loss) << ','
        << text::format_double(e.val_loss) << '\n';
  if (!out) throw IoError("failed writing training log " + path.string());
}

std::vector<EpochLog> read_training_log_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training log " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "epoch,train_loss,val_loss")
    throw IoError(path.string() + ": unexpected training log header");
  std::vector<EpochLog> log;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 3) throw IoError(path.string() + ": row " + std::to_string(row) + " needs 3 fields");
    try {
      log.push_back({static_cast<int>(text::parse_int(f[0])), text::parse_double(f[1]),
                     text::parse_double(f[2])});
    } catch (const ValidationError& e) {
      throw IoError(path.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
  }
  return log;
}

template TrainResult<neural::LstmLayerWeights> train_network(
    const RecurrentNetwork<neural::LstmLayerWeights>&, const WindowedDataset&,
    const WindowedDataset&, const NoiseSpec&, const TrainConfig&,
    const ResumeState<neural::LstmLayerWeights>*, const EpochCallback&);
template TrainResult<neural::GruLayerWeights> train_network(
    const RecurrentNetwork<neural::GruLayerWeights>&, const WindowedDataset&,
    const WindowedDataset&, const NoiseSpec&, const TrainConfig&,
    const ResumeState<neural::GruLayerWeights>*, const EpochCallback&);
template double evaluate_loss(const RecurrentNetwork<neural::LstmLayerWeights>&,
                              const WindowedDataset&, int, int);
template double evaluate_loss(const RecurrentNetwork<neural::GruLayerWeights>&,
                              const WindowedDataset&, int, int);

}  // namespace vobs
