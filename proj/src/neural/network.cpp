#include "vobs/neural/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "vobs/errors.hpp"

namespace vobs::neural {

namespace {

void fill_uniform(MatrixXd& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  // Column-major fill order is part of the reproducibility contract.
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
}

void apply_activation(MatrixXd& z, Activation a) {
  if (a == Activation::sigmoid) z = sigmoid(z.array()).matrix();
}

template <typename Layer>
void init_layer(Layer& layer, std::mt19937_64& rng) {
  fill_uniform(layer.input_weights, 1.0 / std::sqrt(static_cast<double>(layer.input_dim())), rng);
  fill_uniform(layer.recurrent_weights, 1.0 / std::sqrt(static_cast<double>(layer.hidden())), rng);
  layer.biases.setZero();
}

void init_forget_bias(LstmLayerWeights& layer) {
  layer.biases.segment(layer.hidden(), layer.hidden()).setConstant(1.0);
}
void init_forget_bias(GruLayerWeights&) {}

Index first_nonfinite_step(const MatrixXd& seq, Index batch) {
  for (Index c = 0; c < seq.cols(); ++c) {
    if (!seq.col(c).allFinite()) return c / batch;
  }
  return -1;
}

template <typename Layer>
Index recurrent_top_hidden(const RecurrentNetwork<Layer>& net) {
  return net.recurrent_stack.back().hidden();
}

template <typename Layer>
void run_recurrent(const RecurrentNetwork<Layer>& net, const MatrixXd& inputs, Index steps,
                   Index batch, std::vector<typename KernelTraits<Layer>::Cache>& caches) {
  if (inputs.rows() != net.input_dim) throw ValidationError("network input dimension mismatch");
  caches.resize(net.recurrent_stack.size());
  for (std::size_t l = 0; l < net.recurrent_stack.size(); ++l) {
    const MatrixXd& x = l == 0 ? inputs : caches[l - 1].hidden;
    forward_sequence(net.recurrent_stack[l], x, steps, batch, caches[l]);
    const Index bad = first_nonfinite_step(caches[l].hidden, batch);
    if (bad >= 0) {
      std::ostringstream msg;
      msg << "non-finite activation in recurrent layer " << l << " at step " << bad;
      throw NumericalError(msg.str());
    }
  }
}

template <typename Layer>
MatrixXd run_head(const RecurrentNetwork<Layer>& net, const MatrixXd& features,
                  const MatrixXd& feedback, MatrixXd* head_input, std::vector<MatrixXd>* outs) {
  const Index batch = features.cols();
  MatrixXd u(features.rows() + net.feedback_dim, batch);
  u.topRows(features.rows()) = features;
  if (net.feedback_dim > 0) {
    if (feedback.rows() != net.feedback_dim || feedback.cols() != batch) {
      throw ValidationError("feedback shape mismatch");
    }
    u.bottomRows(net.feedback_dim) = feedback;
  }
  MatrixXd a = u;
  if (outs) outs->clear();
  for (std::size_t l = 0; l < net.dense_stack.size(); ++l) {
    const DenseWeights& d = net.dense_stack[l];
    MatrixXd z = d.weight * a;
    z.colwise() += d.bias;
    apply_activation(z, d.activation);
    if (!z.allFinite()) {
      throw NumericalError("non-finite activation in dense layer " + std::to_string(l));
    }
    if (outs) outs->push_back(z);
    a = std::move(z);
  }
  if (head_input) *head_input = std::move(u);
  return a;
}

}  // namespace

template <typename Layer>
Architecture RecurrentNetwork<Layer>::architecture() const {
  Architecture a;
  a.input_dim = input_dim;
  a.feedback_dim = feedback_dim;
  a.recurrent_hidden.clear();
  for (const auto& l : recurrent_stack) a.recurrent_hidden.push_back(l.hidden());
  a.dense.clear();
  for (const auto& d : dense_stack) a.dense.push_back(d.out_dim());
  a.output_activation = dense_stack.empty() ? Activation::sigmoid : dense_stack.back().activation;
  return a;
}

template <typename Layer>
void RecurrentNetwork<Layer>::validate() const {
  if (recurrent_stack.empty() || dense_stack.empty()) {
    throw WeightShapeError("network needs at least one recurrent and one dense layer");
  }
  Index in = input_dim;
  for (std::size_t l = 0; l < recurrent_stack.size(); ++l) {
    const Layer& r = recurrent_stack[l];
    const Index h = r.recurrent_weights.cols();
    if (r.input_weights.rows() != Layer::kGates * h || r.input_weights.cols() != in ||
        r.recurrent_weights.rows() != Layer::kGates * h || r.biases.size() != Layer::kGates * h) {
      throw WeightShapeError("recurrent layer " + std::to_string(l) + " has inconsistent shapes");
    }
    if (!r.input_weights.allFinite() || !r.recurrent_weights.allFinite() || !r.biases.allFinite()) {
      throw WeightShapeError("recurrent layer " + std::to_string(l) + " has non-finite weights");
    }
    in = h;
  }
  in += feedback_dim;
  for (std::size_t l = 0; l < dense_stack.size(); ++l) {
    const DenseWeights& d = dense_stack[l];
    if (d.weight.cols() != in || d.bias.size() != d.weight.rows()) {
      throw WeightShapeError("dense layer " + std::to_string(l) + " has inconsistent shapes");
    }
    if (!d.weight.allFinite() || !d.bias.allFinite()) {
      throw WeightShapeError("dense layer " + std::to_string(l) + " has non-finite weights");
    }
    in = d.weight.rows();
  }
}

template <typename Layer>
void RecurrentNetwork<Layer>::set_zero() {
  for (auto& r : recurrent_stack) {
    r.input_weights.setZero();
    r.recurrent_weights.setZero();
    r.biases.setZero();
  }
  for (auto& d : dense_stack) {
    d.weight.setZero();
    d.bias.setZero();
  }
}

template <typename Layer>
RecurrentNetwork<Layer> RecurrentNetwork<Layer>::zeros_like() const {
  RecurrentNetwork out = *this;
  out.set_zero();
  return out;
}

template <typename Layer>
RecurrentNetwork<Layer> RecurrentNetwork<Layer>::zeros(const Architecture& arch) {
  if (arch.recurrent_hidden.empty() || arch.dense.empty() || arch.input_dim < 1) {
    throw ValidationError("architecture needs recurrent and dense layers");
  }
  RecurrentNetwork net;
  net.input_dim = arch.input_dim;
  net.feedback_dim = arch.feedback_dim;
  Index in = arch.input_dim;
  for (Index h : arch.recurrent_hidden) {
    net.recurrent_stack.push_back(Layer::zeros(in, h));
    in = h;
  }
  in += arch.feedback_dim;
  for (std::size_t l = 0; l < arch.dense.size(); ++l) {
    const bool last = l + 1 == arch.dense.size();
    net.dense_stack.push_back(DenseWeights::zeros(in, arch.dense[l],
                                                  last ? arch.output_activation : Activation::sigmoid));
    in = arch.dense[l];
  }
  return net;
}

template <typename Layer>
RecurrentNetwork<Layer> RecurrentNetwork<Layer>::initialize(const Architecture& arch,
                                                            std::uint64_t seed) {
  RecurrentNetwork net = zeros(arch);
  net.init_seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& r : net.recurrent_stack) {
    init_layer(r, rng);
    init_forget_bias(r);
  }
  for (auto& d : net.dense_stack) {
    fill_uniform(d.weight, 1.0 / std::sqrt(static_cast<double>(d.in_dim())), rng);
    d.bias.setZero();
  }
  return net;
}

template <typename Layer>
MatrixXd forward(const RecurrentNetwork<Layer>& net, const MatrixXd& inputs, Index steps,
                 const MatrixXd& feedback, ForwardCache<Layer>* cache) {
  if (steps < 1 || inputs.cols() % steps != 0) throw ValidationError("forward: bad step count");
  const Index batch = inputs.cols() / steps;
  ForwardCache<Layer> local;
  ForwardCache<Layer>& c = cache ? *cache : local;
  c.steps = steps;
  c.batch = batch;
  run_recurrent(net, inputs, steps, batch, c.recurrent);
  const MatrixXd features = c.recurrent.back().hidden.rightCols(batch);
  if (!cache) return run_head(net, features, feedback, nullptr, nullptr);
  return run_head(net, features, feedback, &c.head_input, &c.dense_out);
}

template <typename Layer>
MatrixXd recurrent_features(const RecurrentNetwork<Layer>& net, const MatrixXd& inputs, Index steps,
                            Index batch) {
  std::vector<typename KernelTraits<Layer>::Cache> caches;
  run_recurrent(net, inputs, steps, batch, caches);
  return caches.back().hidden.rightCols(batch);
}

template <typename Layer>
MatrixXd head_forward(const RecurrentNetwork<Layer>& net, const MatrixXd& features,
                      const MatrixXd& feedback) {
  if (features.rows() != recurrent_top_hidden(net)) throw ValidationError("feature dimension mismatch");
  return run_head(net, features, feedback, nullptr, nullptr);
}

template <typename Layer>
VectorXd forward_full(const RecurrentNetwork<Layer>& net, const MatrixXd& window,
                      const VectorXd& feedback) {
  const MatrixXd inputs = window.transpose();
  MatrixXd fb;
  if (net.feedback_dim > 0) fb = feedback;
  return forward(net, inputs, window.rows(), fb).col(0);
}

double l2_loss(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ValidationError("l2_loss: shape mismatch");
  }
  if (pred.size() == 0) return 0.0;
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

template <typename Layer>
double accumulate_gradient(const RecurrentNetwork<Layer>& net, const SequenceBatch& batch,
                           RecurrentNetwork<Layer>& grad, double scale) {
  ForwardCache<Layer> cache;
  const MatrixXd pred = forward(net, batch.inputs, batch.steps, batch.feedback, &cache);
  if (pred.rows() != batch.targets.rows() || pred.cols() != batch.targets.cols()) {
    throw ValidationError("target shape mismatch");
  }
  const MatrixXd err = pred - batch.targets;
  const double sse = err.squaredNorm();

  MatrixXd da = 2.0 * scale * err;
  for (std::size_t l = net.dense_stack.size(); l-- > 0;) {
    const DenseWeights& d = net.dense_stack[l];
    const MatrixXd& a = cache.dense_out[l];
    MatrixXd dz = d.activation == Activation::sigmoid ? MatrixXd((da.array() * a.array() * (1.0 - a.array())).matrix()) : da;
    const MatrixXd& a_prev = l == 0 ? cache.head_input : cache.dense_out[l - 1];
    grad.dense_stack[l].weight.noalias() += dz * a_prev.transpose();
    grad.dense_stack[l].bias += dz.rowwise().sum();
    da.noalias() = d.weight.transpose() * dz;
  }

  const Index B = cache.batch;
  const Index T = cache.steps;
  const Index h_top = recurrent_top_hidden(net);
  MatrixXd d_hidden = MatrixXd::Zero(h_top, T * B);
  d_hidden.rightCols(B) = da.topRows(h_top);
  MatrixXd dx;
  for (std::size_t l = net.recurrent_stack.size(); l-- > 0;) {
    const MatrixXd& x = l == 0 ? batch.inputs : cache.recurrent[l - 1].hidden;
    backward_sequence(net.recurrent_stack[l], x, cache.recurrent[l], d_hidden, grad.recurrent_stack[l],
                      l == 0 ? nullptr : &dx);
    if (l > 0) std::swap(d_hidden, dx);
  }
  return sse;
}

template <typename Layer>
double backward_full(const RecurrentNetwork<Layer>& net, const SequenceBatch& batch,
                     RecurrentNetwork<Layer>& grad) {
  grad = net.zeros_like();
  const double n = static_cast<double>(batch.targets.size());
  const double sse = accumulate_gradient(net, batch, grad, 1.0 / n);
  return sse / n;
}

template <typename Layer>
std::vector<ParamView> param_views(RecurrentNetwork<Layer>& net) {
  std::vector<ParamView> out;
  auto add = [&out](std::string name, auto& m) {
    out.push_back({std::move(name), std::span<double>(m.data(), static_cast<std::size_t>(m.size()))});
  };
  for (std::size_t l = 0; l < net.recurrent_stack.size(); ++l) {
    const std::string p = "recurrent." + std::to_string(l) + ".";
    add(p + "input_weights", net.recurrent_stack[l].input_weights);
    add(p + "recurrent_weights", net.recurrent_stack[l].recurrent_weights);
    add(p + "biases", net.recurrent_stack[l].biases);
  }
  for (std::size_t l = 0; l < net.dense_stack.size(); ++l) {
    const std::string p = "dense." + std::to_string(l) + ".";
    add(p + "weight", net.dense_stack[l].weight);
    add(p + "bias", net.dense_stack[l].bias);
  }
  return out;
}

MatrixXd pack_sequences(std::span<const MatrixXd> windows) {
  if (windows.empty()) return {};
  const Index steps = windows.front().rows();
  const Index dim = windows.front().cols();
  const auto batch = static_cast<Index>(windows.size());
  MatrixXd out(dim, steps * batch);
  for (Index b = 0; b < batch; ++b) {
    const MatrixXd& w = windows[static_cast<std::size_t>(b)];
    if (w.rows() != steps || w.cols() != dim) throw ValidationError("pack_sequences: ragged windows");
    for (Index t = 0; t < steps; ++t) out.col(t * batch + b) = w.row(t).transpose();
  }
  return out;
}

#define VOBS_INSTANTIATE(Layer)                                                                    \
  template struct RecurrentNetwork<Layer>;                                                         \
  template MatrixXd forward(const RecurrentNetwork<Layer>&, const MatrixXd&, Index, const MatrixXd&, \
                            ForwardCache<Layer>*);                                                 \
  template MatrixXd recurrent_features(const RecurrentNetwork<Layer>&, const MatrixXd&, Index, Index); \
  template MatrixXd head_forward(const RecurrentNetwork<Layer>&, const MatrixXd&, const MatrixXd&); \
  template VectorXd forward_full(const RecurrentNetwork<Layer>&, const MatrixXd&, const VectorXd&); \
  template double accumulate_gradient(const RecurrentNetwork<Layer>&, const SequenceBatch&,        \
                                      RecurrentNetwork<Layer>&, double);                           \
  template double backward_full(const RecurrentNetwork<Layer>&, const SequenceBatch&,              \
                                RecurrentNetwork<Layer>&);                                         \
  template std::vector<ParamView> param_views(RecurrentNetwork<Layer>&);

VOBS_INSTANTIATE(LstmLayerWeights)
VOBS_INSTANTIATE(GruLayerWeights)

#undef VOBS_INSTANTIATE

}  // namespace vobs::neural
