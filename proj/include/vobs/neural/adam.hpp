#pragma once

#include <cmath>
#include <cstdint>

#include "vobs/errors.hpp"
#include "vobs/neural/network.hpp"

namespace vobs::neural {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool valid() const {
    return lr > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0;
  }
};

template <typename Net>
struct AdamState {
  Net m;
  Net v;
  std::uint64_t step = 0;
  AdamHyper hyper{};

  static AdamState for_weights(const Net& w, AdamHyper h = {}) {
    return {w.zeros_like(), w.zeros_like(), 0, h};
  }
};

// Bias-corrected Adam update, applied coordinate-wise over param_views order.
template <typename Net>
void adam_step(Net& w, Net& grads, AdamState<Net>& state) {
  auto pw = param_views(w);
  auto pg = param_views(grads);
  auto pm = param_views(state.m);
  auto pv = param_views(state.v);
  if (pw.size() != pg.size() || pw.size() != pm.size() || pw.size() != pv.size())
    throw ValidationError("adam_step: parameter block count mismatch");
  const AdamHyper& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t b = 0; b < pw.size(); ++b) {
    const std::size_t n = pw[b].values.size();
    if (pg[b].values.size() != n || pm[b].values.size() != n || pv[b].values.size() != n)
      throw ValidationError("adam_step: shape mismatch in " + pw[b].name);
    double* x = pw[b].values.data();
    const double* g = pg[b].values.data();
    double* m = pm[b].values.data();
    double* v = pv[b].values.data();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

}  // namespace vobs::neural
