#pragma once

#include <Eigen/Core>
#include <string>

namespace vobs::neural {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { sigmoid, identity };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

struct DenseWeights {
  MatrixXd weight;  // out x in
  VectorXd bias;    // out
  Activation activation = Activation::sigmoid;

  Index out_dim() const { return weight.rows(); }
  Index in_dim() const { return weight.cols(); }
  static DenseWeights zeros(Index in, Index out, Activation act);
};

// Gate blocks are stacked row-wise in the order (input, forget, candidate,
// output); this order is also the on-disk order.
struct LstmLayerWeights {
  static constexpr int kGates = 4;
  static constexpr const char* kKind = "lstm";

  MatrixXd input_weights;      // 4H x in
  MatrixXd recurrent_weights;  // 4H x H
  VectorXd biases;             // 4H

  Index hidden() const { return recurrent_weights.cols(); }
  Index input_dim() const { return input_weights.cols(); }
  static LstmLayerWeights zeros(Index in, Index hidden);
};

// GRU gate blocks in the order (update, reset, candidate). The reset gate
// multiplies the previous hidden state before the candidate's recurrent map.
struct GruLayerWeights {
  static constexpr int kGates = 3;
  static constexpr const char* kKind = "gru";

  MatrixXd input_weights;      // 3H x in
  MatrixXd recurrent_weights;  // 3H x H
  VectorXd biases;             // 3H

  Index hidden() const { return recurrent_weights.cols(); }
  Index input_dim() const { return input_weights.cols(); }
  static GruLayerWeights zeros(Index in, Index hidden);
};

// Elementwise nonlinearities built on the vectorized exp.
template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return (1.0 + (-x).exp()).inverse();
}

template <typename Derived>
auto tanh_exp(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 * ((2.0 * x).exp() + 1.0).inverse();
}

struct LstmStep {
  VectorXd h;
  VectorXd c;
};

// Single-step cell evaluation, routed through the batched sequence kernel.
LstmStep lstm_cell_forward(const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev,
                           const LstmLayerWeights& w);
VectorXd gru_cell_forward(const VectorXd& x, const VectorXd& h_prev, const GruLayerWeights& w);

}  // namespace vobs::neural
