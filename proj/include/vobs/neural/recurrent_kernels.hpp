#pragma once

// Batched sequence kernels. A sequence batch is a (features x steps*batch)
// matrix whose column t*batch + b holds sample b at step t.

#include "vobs/neural/layers.hpp"

namespace vobs::neural {

struct LstmCache {
  Index steps = 0;
  Index batch = 0;
  MatrixXd gates;      // 4H x TB, post-activation (i, f, g, o)
  MatrixXd cells;      // H x TB
  MatrixXd tanh_cells; // H x TB
  MatrixXd hidden;     // H x TB
  MatrixXd h0;         // H x B
  MatrixXd c0;         // H x B
};

struct GruCache {
  Index steps = 0;
  Index batch = 0;
  MatrixXd gates;        // 3H x TB, post-activation (z, r, n)
  MatrixXd reset_hidden; // H x TB, r * h_prev
  MatrixXd hidden;       // H x TB
  MatrixXd h0;           // H x B
};

template <typename Layer>
struct KernelTraits;

template <>
struct KernelTraits<LstmLayerWeights> {
  using Cache = LstmCache;
};

template <>
struct KernelTraits<GruLayerWeights> {
  using Cache = GruCache;
};

// h0/c0 may be empty matrices, meaning zero initial state.
void forward_sequence(const LstmLayerWeights& w, const MatrixXd& x, Index steps, Index batch,
                      LstmCache& cache, const MatrixXd& h0 = {}, const MatrixXd& c0 = {});
void forward_sequence(const GruLayerWeights& w, const MatrixXd& x, Index steps, Index batch,
                      GruCache& cache, const MatrixXd& h0 = {});

// d_hidden: gradient w.r.t. every hidden output (H x TB); consumed in place.
// Parameter gradients are added into `grad`; dx (if non-null) is overwritten.
void backward_sequence(const LstmLayerWeights& w, const MatrixXd& x, const LstmCache& cache,
                       MatrixXd& d_hidden, LstmLayerWeights& grad, MatrixXd* dx);
void backward_sequence(const GruLayerWeights& w, const MatrixXd& x, const GruCache& cache,
                       MatrixXd& d_hidden, GruLayerWeights& grad, MatrixXd* dx);

}  // namespace vobs::neural
