#include "vobs/neural/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "vobs/errors.hpp"
#include "vobs/text_format.hpp"

namespace vobs::neural {
namespace {

template <typename Layer>
double batch_loss(const RecurrentNetwork<Layer>& net, const SequenceBatch& b) {
  return l2_loss(forward(net, b.inputs, b.steps, b.feedback), b.targets);
}

template <typename Layer>
void corrupt(RecurrentNetwork<Layer>& grad) {
  auto& l = grad.recurrent_stack.front();
  const Index h = l.hidden();
  l.input_weights.middleRows(h, h) *= 1.5;
  l.recurrent_weights.middleRows(h, h) *= 1.5;
  l.biases.segment(h, h) *= 1.5;
}

}  // namespace

template <typename Layer>
GradCheckResult gradient_check(const RecurrentNetwork<Layer>& net, const SequenceBatch& batch,
                               const GradCheckOptions& opt) {
  RecurrentNetwork<Layer> grad = net.zeros_like();
  backward_full(net, batch, grad);
  if (opt.corrupt_gate_gradient) corrupt(grad);

  RecurrentNetwork<Layer> probe = net;
  auto pviews = param_views(probe);
  auto gviews = param_views(grad);
  GradCheckResult out;
  for (std::size_t b = 0; b < pviews.size(); ++b) {
    GradEntry worst{pviews[b].name, 0, 0.0, 0.0, -1.0};
    for (std::size_t i = 0; i < pviews[b].values.size(); ++i) {
      double& x = pviews[b].values[i];
      const double saved = x;
      x = saved + opt.eps;
      const double up = batch_loss(probe, batch);
      x = saved - opt.eps;
      const double down = batch_loss(probe, batch);
      x = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double analytic = gviews[b].values[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), opt.denominator_floor});
      GradEntry e{pviews[b].name, i, analytic, numeric, std::abs(analytic - numeric) / denom};
      if (e.rel_error > worst.rel_error) worst = e;
      out.max_rel_error = std::max(out.max_rel_error, e.rel_error);
      out.entries.push_back(std::move(e));
    }
    if (worst.rel_error >= 0.0) out.worst_per_block.push_back(worst);
  }
  return out;
}

template <typename Layer>
GradCheckResult random_gradient_check(std::uint64_t seed, Index feedback_dim,
                                      const GradCheckOptions& opt, Index steps, Index batch) {
  const Architecture arch = Architecture::tiny(feedback_dim);
  auto net = RecurrentNetwork<Layer>::initialize(arch, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Widen the weights beyond the init range so gates leave their linear region.
  for (auto& v : param_views(net))
    for (double& x : v.values) x *= 1.0 + 2.0 * unit(rng);
  SequenceBatch b;
  b.steps = steps;
  b.size = batch;
  b.inputs.resize(arch.input_dim, steps * batch);
  for (Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = unit(rng);
  b.feedback.resize(feedback_dim, batch);
  for (Index i = 0; i < b.feedback.size(); ++i) b.feedback.data()[i] = unit(rng);
  b.targets.resize(arch.dense.back(), batch);
  for (Index i = 0; i < b.targets.size(); ++i) b.targets.data()[i] = unit(rng);
  return gradient_check(net, b, opt);
}

void write_gradcheck_csv(const GradCheckResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write gradient-check CSV " + path.string());
  out << "coordinate,analytic,numeric,rel_error\n";
  for (const auto& e : r.entries)
    out << e.block << '[' << e.index << "]," << text::format_double(e.analytic) << ','
        << text::format_double(e.numeric) << ',' << text::format_double(e.rel_error) << '\n';
  if (!out) throw IoError("failed writing gradient-check CSV " + path.string());
}

template GradCheckResult gradient_check(const RecurrentNetwork<LstmLayerWeights>&,
                                        const SequenceBatch&, const GradCheckOptions&);
template GradCheckResult gradient_check(const RecurrentNetwork<GruLayerWeights>&,
                                        const SequenceBatch&, const GradCheckOptions&);
template GradCheckResult random_gradient_check<LstmLayerWeights>(std::uint64_t, Index,
                                                                 const GradCheckOptions&, Index,
                                                                 Index);
template GradCheckResult random_gradient_check<GruLayerWeights>(std::uint64_t, Index,
                                                                const GradCheckOptions&, Index,
                                                                Index);

}  // namespace vobs::neural
