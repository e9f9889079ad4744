#include "vobs/neural/layers.hpp"

#include "vobs/errors.hpp"
#include "vobs/neural/recurrent_kernels.hpp"

namespace vobs::neural {

const char* to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "identity"; }

Activation parse_activation(const std::string& name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + name + "'");
}

DenseWeights DenseWeights::zeros(Index in, Index out, Activation act) {
  return {MatrixXd::Zero(out, in), VectorXd::Zero(out), act};
}

LstmLayerWeights LstmLayerWeights::zeros(Index in, Index hidden) {
  return {MatrixXd::Zero(kGates * hidden, in), MatrixXd::Zero(kGates * hidden, hidden),
          VectorXd::Zero(kGates * hidden)};
}

GruLayerWeights GruLayerWeights::zeros(Index in, Index hidden) {
  return {MatrixXd::Zero(kGates * hidden, in), MatrixXd::Zero(kGates * hidden, hidden),
          VectorXd::Zero(kGates * hidden)};
}

LstmStep lstm_cell_forward(const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev,
                           const LstmLayerWeights& w) {
  if (h_prev.size() != w.hidden() || c_prev.size() != w.hidden()) {
    throw ValidationError("lstm_cell_forward: state shape mismatch");
  }
  LstmCache cache;
  forward_sequence(w, x, 1, 1, cache, h_prev, c_prev);
  return {cache.hidden.col(0), cache.cells.col(0)};
}

VectorXd gru_cell_forward(const VectorXd& x, const VectorXd& h_prev, const GruLayerWeights& w) {
  if (h_prev.size() != w.hidden()) throw ValidationError("gru_cell_forward: state shape mismatch");
  GruCache cache;
  forward_sequence(w, x, 1, 1, cache, h_prev);
  return cache.hidden.col(0);
}

}  // namespace vobs::neural
