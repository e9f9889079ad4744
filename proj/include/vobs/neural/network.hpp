#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vobs/neural/layers.hpp"
#include "vobs/neural/recurrent_kernels.hpp"

namespace vobs::neural {

struct Architecture {
  Index input_dim = 5;
  std::vector<Index> recurrent_hidden{32, 64, 64, 128};
  std::vector<Index> dense{64, 128, 64, 3};
  // Width of the state vector concatenated with the last hidden state before
  // the dense head; zero for end-to-end networks without feedback.
  Index feedback_dim = 3;
  Activation output_activation = Activation::sigmoid;

  static Architecture observer() { return {}; }
  static Architecture end_to_end() {
    Architecture a;
    a.feedback_dim = 0;
    return a;
  }
  // Small network used by gradient checks.
  static Architecture tiny(Index feedback = 3) {
    Architecture a;
    a.recurrent_hidden = {3, 4};
    a.dense = {5, 3};
    a.feedback_dim = feedback;
    return a;
  }
  bool operator==(const Architecture&) const = default;
};

// Recurrent stack feeding a dense head. Hidden dense layers are sigmoid; the
// output layer activation is configurable.
template <typename Layer>
struct RecurrentNetwork {
  static constexpr int kFormatVersion = 1;

  std::vector<Layer> recurrent_stack;
  std::vector<DenseWeights> dense_stack;
  Index input_dim = 0;
  Index feedback_dim = 0;
  int format_version = kFormatVersion;
  std::uint64_t init_seed = 0;

  Architecture architecture() const;
  Index output_dim() const { return dense_stack.empty() ? 0 : dense_stack.back().out_dim(); }
  // Throws WeightShapeError on inconsistent dimensions or non-finite values.
  void validate() const;
  void set_zero();
  RecurrentNetwork zeros_like() const;

  // Uniform(+-1/sqrt(fan_in)) per matrix; LSTM forget-gate bias 1, other biases 0.
  static RecurrentNetwork initialize(const Architecture& arch, std::uint64_t seed);
  static RecurrentNetwork zeros(const Architecture& arch);
};

using NetworkWeights = RecurrentNetwork<LstmLayerWeights>;
using GruWeights = RecurrentNetwork<GruLayerWeights>;

// A batch of fixed-length sequences; see recurrent_kernels.hpp for the
// column layout of `inputs`.
struct SequenceBatch {
  MatrixXd inputs;    // input_dim x steps*size
  MatrixXd feedback;  // feedback_dim x size (empty when feedback_dim == 0)
  MatrixXd targets;   // out x size
  Index steps = 0;
  Index size = 0;
};

template <typename Layer>
struct ForwardCache {
  Index steps = 0;
  Index batch = 0;
  std::vector<typename KernelTraits<Layer>::Cache> recurrent;
  MatrixXd head_input;
  std::vector<MatrixXd> dense_out;
};

// Throws NumericalError naming the layer (and step) of the first non-finite value.
template <typename Layer>
MatrixXd forward(const RecurrentNetwork<Layer>& net, const MatrixXd& inputs, Index steps,
                 const MatrixXd& feedback, ForwardCache<Layer>* cache = nullptr);

// Final hidden state of the top recurrent layer for each sequence (H x batch).
template <typename Layer>
MatrixXd recurrent_features(const RecurrentNetwork<Layer>& net, const MatrixXd& inputs, Index steps,
                            Index batch);

// Dense head applied to precomputed features and feedback.
template <typename Layer>
MatrixXd head_forward(const RecurrentNetwork<Layer>& net, const MatrixXd& features,
                      const MatrixXd& feedback);

// Window (steps x input_dim, oldest row first) plus feedback -> output.
template <typename Layer>
VectorXd forward_full(const RecurrentNetwork<Layer>& net, const MatrixXd& window,
                      const VectorXd& feedback);

// Mean over batch and channels of the squared error.
double l2_loss(const MatrixXd& pred, const MatrixXd& target);

// Adds scale * d(sum of squared errors)/d(params) into grad; returns the sum of
// squared errors of this batch.
template <typename Layer>
double accumulate_gradient(const RecurrentNetwork<Layer>& net, const SequenceBatch& batch,
                           RecurrentNetwork<Layer>& grad, double scale);

// Exact BPTT gradient of l2_loss for the batch. Overwrites grad, returns the loss.
template <typename Layer>
double backward_full(const RecurrentNetwork<Layer>& net, const SequenceBatch& batch,
                     RecurrentNetwork<Layer>& grad);

struct ParamView {
  std::string name;
  std::span<double> values;
};

// Every parameter block in a fixed order (recurrent layers bottom-up, then
// dense layers); names look like "recurrent.1.biases" or "dense.0.weight".
template <typename Layer>
std::vector<ParamView> param_views(RecurrentNetwork<Layer>& net);

template <typename Layer>
std::size_t param_count(const RecurrentNetwork<Layer>& net) {
  std::size_t n = 0;
  for (const auto& v : param_views(const_cast<RecurrentNetwork<Layer>&>(net))) n += v.values.size();
  return n;
}

// Window matrices (steps x input_dim each) + feedback columns -> batch inputs.
MatrixXd pack_sequences(std::span<const MatrixXd> windows);

}  // namespace vobs::neural
