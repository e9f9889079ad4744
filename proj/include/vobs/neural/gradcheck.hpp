#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vobs/neural/network.hpp"

namespace vobs::neural {

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-6;
  // Debug switch: scales the analytic gradient of the second gate block
  // (LSTM forget gate, GRU reset gate) in the first recurrent layer by 1.5.
  bool corrupt_gate_gradient = false;
};

struct GradEntry {
  std::string block;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<GradEntry> entries;
  // Worst coordinate of every parameter block, in param_views order.
  std::vector<GradEntry> worst_per_block;
};

// Compares every coordinate of backward_full against central differences of
// l2_loss.
template <typename Layer>
GradCheckResult gradient_check(const RecurrentNetwork<Layer>& net, const SequenceBatch& batch,
                               const GradCheckOptions& opt = {});

// Random tiny network and batch for self-checks (hidden [3,4], window 5).
template <typename Layer>
GradCheckResult random_gradient_check(std::uint64_t seed, Index feedback_dim = 3,
                                      const GradCheckOptions& opt = {}, Index steps = 5,
                                      Index batch = 3);

// CSV columns: coordinate,analytic,numeric,rel_error
void write_gradcheck_csv(const GradCheckResult& r, const std::filesystem::path& path);

}  // namespace vobs::neural
