#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "vobs/dataset.hpp"
#include "vobs/neural/adam.hpp"
#include "vobs/neural/network.hpp"

namespace vobs {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool shuffle = true;
  int workers = 1;
  // Each epoch visits the training windows i with (i + epoch) % window_stride == 0,
  // so consecutive epochs walk through different offsets. 1 = every window.
  int window_stride = 1;
  // Validation uses the fixed subset i % val_stride == 0.
  int val_stride = 1;
  // Epochs after lr_drop_epoch run at learning_rate * lr_drop_factor; 0 disables.
  int lr_drop_epoch = 0;
  double lr_drop_factor = 0.1;

  double learning_rate_at(int epoch) const {
    return lr_drop_epoch > 0 && epoch > lr_drop_epoch ? learning_rate * lr_drop_factor : learning_rate;
  }

  bool valid() const {
    return epochs >= 1 && batch_size >= 1 && learning_rate > 0.0 && workers >= 1 &&
           window_stride >= 1 && val_stride >= 1 && lr_drop_epoch >= 0 && lr_drop_factor > 0.0;
  }
};

struct EpochLog {
  int epoch = 0;  // 0 = before the first update
  double train_loss = 0.0;
  double val_loss = 0.0;
};

template <typename Layer>
struct TrainResult {
  neural::RecurrentNetwork<Layer> best;   // weights of the lowest val-loss epoch
  neural::RecurrentNetwork<Layer> last;   // weights after the final epoch
  neural::AdamState<neural::RecurrentNetwork<Layer>> optimizer;  // state after the final epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

template <typename Layer>
struct ResumeState {
  neural::RecurrentNetwork<Layer> net;
  neural::AdamState<neural::RecurrentNetwork<Layer>> optimizer;
  int epochs_completed = 0;
  std::vector<EpochLog> log;  // earlier epochs, carried into the result
  // Best weights so far; when absent the resumed weights stand in.
  std::optional<neural::RecurrentNetwork<Layer>> best;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Minimizes l2_loss with Adam over windowed samples. When the network has a
// feedback input, the previous ground-truth state (with fresh Gaussian noise
// per epoch when `noise` is non-zero) is fed as teacher forcing; validation is
// always noise-free. The noise stream of epoch e is seeded from
// derive_seed(noise.seed, "state_noise", e), and the shuffle of epoch e from
// derive_seed(seed, "shuffle", e). Non-finite losses raise NumericalError
// naming the epoch and batch.
template <typename Layer>
TrainResult<Layer> train_network(const neural::RecurrentNetwork<Layer>& init,
                                 const WindowedDataset& train, const WindowedDataset& val,
                                 const NoiseSpec& noise, const TrainConfig& tc,
                                 const ResumeState<Layer>* resume = nullptr,
                                 const EpochCallback& on_epoch = {});

// Mean noise-free teacher-forced l2_loss over the subset i % stride == 0.
template <typename Layer>
double evaluate_loss(const neural::RecurrentNetwork<Layer>& net, const WindowedDataset& data,
                     int stride = 1, int workers = 1);

// Windows data.index[order[i]] as one batch. `feedback_noise` (3 x order.size(),
// physical units) is added to the previous state before scaling when given.
neural::SequenceBatch gather_batch(const WindowedDataset& data, std::span<const std::size_t> order,
                                   bool with_feedback, const Eigen::MatrixXd* feedback_noise);

void write_training_log_csv(std::span<const EpochLog> log, const std::filesystem::path& path);
std::vector<EpochLog> read_training_log_csv(const std::filesystem::path& path);

}  // namespace vobs
