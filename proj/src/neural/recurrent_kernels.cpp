#include "vobs/neural/recurrent_kernels.hpp"

#include <stdexcept>

#include "vobs/errors.hpp"

namespace vobs::neural {

namespace {

void check_input(Index in_dim, const MatrixXd& x, Index steps, Index batch, const char* who) {
  if (x.rows() != in_dim || x.cols() != steps * batch || steps < 1 || batch < 1) {
    throw ValidationError(std::string(who) + ": input shape mismatch");
  }
}

MatrixXd initial_or_zero(const MatrixXd& m, Index rows, Index batch) {
  if (m.size() == 0) return MatrixXd::Zero(rows, batch);
  if (m.rows() != rows || m.cols() != batch) throw ValidationError("initial state shape mismatch");
  return m;
}

}  // namespace

void forward_sequence(const LstmLayerWeights& w, const MatrixXd& x, Index steps, Index batch,
                      LstmCache& cache, const MatrixXd& h0, const MatrixXd& c0) {
  check_input(w.input_dim(), x, steps, batch, "lstm forward");
  const Index H = w.hidden();
  const Index B = batch;
  cache.steps = steps;
  cache.batch = batch;
  cache.h0 = initial_or_zero(h0, H, B);
  cache.c0 = initial_or_zero(c0, H, B);
  const bool has_h0 = h0.size() != 0;

  cache.gates.resize(4 * H, steps * B);
  cache.gates.noalias() = w.input_weights * x;
  cache.gates.colwise() += w.biases;
  cache.cells.resize(H, steps * B);
  cache.tanh_cells.resize(H, steps * B);
  cache.hidden.resize(H, steps * B);

  for (Index t = 0; t < steps; ++t) {
    auto z = cache.gates.middleCols(t * B, B);
    if (t > 0) {
      z.noalias() += w.recurrent_weights * cache.hidden.middleCols((t - 1) * B, B);
    } else if (has_h0) {
      z.noalias() += w.recurrent_weights * cache.h0;
    }
    z.topRows(2 * H) = sigmoid(z.topRows(2 * H).array()).matrix();
    z.middleRows(2 * H, H) = tanh_exp(z.middleRows(2 * H, H).array()).matrix();
    z.bottomRows(H) = sigmoid(z.bottomRows(H).array()).matrix();

    const auto i = z.topRows(H).array();
    const auto f = z.middleRows(H, H).array();
    const auto g = z.middleRows(2 * H, H).array();
    const auto o = z.bottomRows(H).array();
    auto c = cache.cells.middleCols(t * B, B);
    if (t > 0) {
      c = (f * cache.cells.middleCols((t - 1) * B, B).array() + i * g).matrix();
    } else {
      c = (f * cache.c0.array() + i * g).matrix();
    }
    auto tc = cache.tanh_cells.middleCols(t * B, B);
    tc = tanh_exp(c.array()).matrix();
    cache.hidden.middleCols(t * B, B) = (o * tc.array()).matrix();
  }
}

void backward_sequence(const LstmLayerWeights& w, const MatrixXd& x, const LstmCache& cache,
                       MatrixXd& d_hidden, LstmLayerWeights& grad, MatrixXd* dx) {
  const Index H = w.hidden();
  const Index T = cache.steps;
  const Index B = cache.batch;
  MatrixXd dz(4 * H, T * B);
  MatrixXd dh_next = MatrixXd::Zero(H, B);
  MatrixXd dc_next = MatrixXd::Zero(H, B);
  MatrixXd dc(H, B);

  for (Index t = T - 1; t >= 0; --t) {
    auto dh = d_hidden.middleCols(t * B, B);
    dh += dh_next;
    const auto gates = cache.gates.middleCols(t * B, B);
    const auto i = gates.topRows(H).array();
    const auto f = gates.middleRows(H, H).array();
    const auto g = gates.middleRows(2 * H, H).array();
    const auto o = gates.bottomRows(H).array();
    const auto tc = cache.tanh_cells.middleCols(t * B, B).array();
    const auto c_prev = t > 0 ? cache.cells.middleCols((t - 1) * B, B).array()
                              : cache.c0.middleCols(0, B).array();

    dc = (dh.array() * o * (1.0 - tc.square()) + dc_next.array()).matrix();
    auto d = dz.middleCols(t * B, B);
    d.topRows(H) = (dc.array() * g * i * (1.0 - i)).matrix();
    d.middleRows(H, H) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
    d.middleRows(2 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();
    d.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc_next = (dc.array() * f).matrix();
    dh_next.noalias() = w.recurrent_weights.transpose() * d;
  }

  grad.input_weights.noalias() += dz * x.transpose();
  if (T > 1) {
    grad.recurrent_weights.noalias() +=
        dz.rightCols((T - 1) * B) * cache.hidden.leftCols((T - 1) * B).transpose();
  }
  if (!cache.h0.isZero(0.0)) grad.recurrent_weights.noalias() += dz.leftCols(B) * cache.h0.transpose();
  grad.biases += dz.rowwise().sum();
  if (dx) dx->noalias() = w.input_weights.transpose() * dz;
}

void forward_sequence(const GruLayerWeights& w, const MatrixXd& x, Index steps, Index batch,
                      GruCache& cache, const MatrixXd& h0) {
  check_input(w.input_dim(), x, steps, batch, "gru forward");
  const Index H = w.hidden();
  const Index B = batch;
  cache.steps = steps;
  cache.batch = batch;
  cache.h0 = initial_or_zero(h0, H, B);
  const bool has_h0 = h0.size() != 0;

  cache.gates.resize(3 * H, steps * B);
  cache.gates.noalias() = w.input_weights * x;
  cache.gates.colwise() += w.biases;
  cache.reset_hidden.resize(H, steps * B);
  cache.hidden.resize(H, steps * B);

  for (Index t = 0; t < steps; ++t) {
    auto gt = cache.gates.middleCols(t * B, B);
    const MatrixXd& h_all = cache.hidden;
    const MatrixXd& h_init = cache.h0;
    const bool recurrent = t > 0 || has_h0;
    auto h_prev = t > 0 ? h_all.middleCols((t - 1) * B, B) : h_init.middleCols(0, B);
    if (recurrent) gt.topRows(2 * H).noalias() += w.recurrent_weights.topRows(2 * H) * h_prev;
    gt.topRows(2 * H) = sigmoid(gt.topRows(2 * H).array()).matrix();
    auto rh = cache.reset_hidden.middleCols(t * B, B);
    rh = (gt.middleRows(H, H).array() * h_prev.array()).matrix();
    if (recurrent) gt.bottomRows(H).noalias() += w.recurrent_weights.bottomRows(H) * rh;
    gt.bottomRows(H) = tanh_exp(gt.bottomRows(H).array()).matrix();
    const auto z = gt.topRows(H).array();
    const auto n = gt.bottomRows(H).array();
    cache.hidden.middleCols(t * B, B) = (n + z * (h_prev.array() - n)).matrix();
  }
}

void backward_sequence(const GruLayerWeights& w, const MatrixXd& x, const GruCache& cache,
                       MatrixXd& d_hidden, GruLayerWeights& grad, MatrixXd* dx) {
  const Index H = w.hidden();
  const Index T = cache.steps;
  const Index B = cache.batch;
  MatrixXd dz(3 * H, T * B);
  MatrixXd dh_next = MatrixXd::Zero(H, B);
  MatrixXd d_rh(H, B);

  for (Index t = T - 1; t >= 0; --t) {
    auto dh = d_hidden.middleCols(t * B, B);
    dh += dh_next;
    const auto gates = cache.gates.middleCols(t * B, B);
    const auto z = gates.topRows(H).array();
    const auto r = gates.middleRows(H, H).array();
    const auto n = gates.bottomRows(H).array();
    const auto h_prev = t > 0 ? cache.hidden.middleCols((t - 1) * B, B).array()
                              : cache.h0.middleCols(0, B).array();
    auto d = dz.middleCols(t * B, B);
    d.bottomRows(H) = (dh.array() * (1.0 - z) * (1.0 - n.square())).matrix();
    d.topRows(H) = (dh.array() * (h_prev - n) * z * (1.0 - z)).matrix();
    d_rh.noalias() = w.recurrent_weights.bottomRows(H).transpose() * d.bottomRows(H);
    d.middleRows(H, H) = (d_rh.array() * h_prev * r * (1.0 - r)).matrix();
    dh_next = (dh.array() * z + d_rh.array() * r).matrix();
    dh_next.noalias() += w.recurrent_weights.topRows(2 * H).transpose() * d.topRows(2 * H);
  }

  grad.input_weights.noalias() += dz * x.transpose();
  if (T > 1) {
    grad.recurrent_weights.topRows(2 * H).noalias() +=
        dz.topRows(2 * H).rightCols((T - 1) * B) * cache.hidden.leftCols((T - 1) * B).transpose();
  }
  if (!cache.h0.isZero(0.0)) {
    grad.recurrent_weights.topRows(2 * H).noalias() +=
        dz.topRows(2 * H).leftCols(B) * cache.h0.transpose();
  }
  grad.recurrent_weights.bottomRows(H).noalias() += dz.bottomRows(H) * cache.reset_hidden.transpose();
  grad.biases += dz.rowwise().sum();
  if (dx) dx->noalias() = w.input_weights.transpose() * dz;
}

}  // namespace vobs::neural
