#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "vobs/dataset.hpp"

namespace vobs {

// Binary dataset cache, all integers and doubles little-endian:
//   "VOBS" | u16 version | u16 window_len | u32 n_sequences
//   | 16 x f64 scaler (sensor min/max pairs, then state min/max pairs)
//   | per sequence: u32 label_len | label bytes | u64 n_frames
//                   | n_frames records of 8 x f64 (5 scaled sensors, 3 physical states)
inline constexpr std::uint16_t kDatasetCacheVersion = 1;

void write_dataset_cache(std::ostream& os, const WindowedDataset& ds);
void write_dataset_cache(const std::filesystem::path& path, const WindowedDataset& ds);

// Throws IoError on bad magic, unsupported version, or truncation.
WindowedDataset read_dataset_cache(std::istream& is);
WindowedDataset read_dataset_cache(const std::filesystem::path& path);

}  // namespace vobs
