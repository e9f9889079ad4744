#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "vobs/neural/adam.hpp"
#include "vobs/neural/network.hpp"

namespace vobs::neural {

// JSON weight document:
//   format_version, cell ("lstm"|"gru"), gate_order, architecture, init_seed,
//   recurrent[] {input_weights, recurrent_weights, biases},
//   dense[] {weight, bias, activation}, checksum, optional optimizer {step, hyper, m, v}.
// Matrices are stored as {rows, cols, data} with data flattened row-major.
// Doubles are written in shortest round-trip form, so save/load is bit-exact.
// The checksum is FNV-1a over the bit patterns of every parameter in
// param_views order (weights, then m and v when present).

template <typename Layer>
struct LoadedWeights {
  RecurrentNetwork<Layer> net;
  std::optional<AdamState<RecurrentNetwork<Layer>>> optimizer;
};

template <typename Layer>
std::string weights_to_string(const RecurrentNetwork<Layer>& net,
                              const AdamState<RecurrentNetwork<Layer>>* optimizer = nullptr);

// Throws WeightVersionError, WeightShapeError or WeightCorruptionError; nothing
// is returned unless the whole document checks out.
template <typename Layer>
LoadedWeights<Layer> weights_from_string(const std::string& text);

// Written through a temporary file and renamed into place.
template <typename Layer>
void save_weights(const RecurrentNetwork<Layer>& net, const std::filesystem::path& path,
                  const AdamState<RecurrentNetwork<Layer>>* optimizer = nullptr);

template <typename Layer>
LoadedWeights<Layer> load_weights_with_state(const std::filesystem::path& path);

template <typename Layer>
RecurrentNetwork<Layer> load_weights(const std::filesystem::path& path) {
  return load_weights_with_state<Layer>(path).net;
}

// Cell kind recorded in a weight file ("lstm" or "gru").
std::string peek_cell_kind(const std::filesystem::path& path);

}  // namespace vobs::neural
