#include "vobs/dataset_cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vobs/errors.hpp"

namespace vobs {

namespace {

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw IoError("dataset cache truncated");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

}  // namespace

void write_dataset_cache(std::ostream& os, const WindowedDataset& ds) {
  os.write("VOBS", 4);
  put_le<std::uint16_t>(os, kDatasetCacheVersion);
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(ds.window_len));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.sequences.size()));
  for (const auto& r : ds.scaler.sensor) {
    put_f64(os, r.min);
    put_f64(os, r.max);
  }
  for (const auto& r : ds.scaler.state) {
    put_f64(os, r.min);
    put_f64(os, r.max);
  }
  for (const auto& seq : ds.sequences) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.label.size()));
    os.write(seq.label.data(), static_cast<std::streamsize>(seq.label.size()));
    const auto n = seq.sensors_scaled.cols();
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kSensorChannels); ++c) put_f64(os, seq.sensors_scaled(c, k));
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kStateChannels); ++c) put_f64(os, seq.states(c, k));
    }
  }
}

void write_dataset_cache(const std::filesystem::path& path, const WindowedDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset_cache(os, ds);
  if (!os) throw IoError("write failed for " + path.string());
}

WindowedDataset read_dataset_cache(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "VOBS", 4) != 0) {
    throw IoError("not a dataset cache (bad magic)");
  }
  const auto version = get_le<std::uint16_t>(is);
  if (version != kDatasetCacheVersion) {
    throw IoError("unsupported dataset cache version " + std::to_string(version));
  }
  WindowedDataset ds;
  ds.window_len = get_le<std::uint16_t>(is);
  const auto n_seq = get_le<std::uint32_t>(is);
  for (auto& r : ds.scaler.sensor) {
    r.min = get_f64(is);
    r.max = get_f64(is);
  }
  for (auto& r : ds.scaler.state) {
    r.min = get_f64(is);
    r.max = get_f64(is);
  }
  ds.sequences.resize(n_seq);
  for (auto& seq : ds.sequences) {
    const auto len = get_le<std::uint32_t>(is);
    seq.label.resize(len);
    if (len && !is.read(seq.label.data(), len)) throw IoError("dataset cache truncated");
    const auto n = static_cast<Eigen::Index>(get_le<std::uint64_t>(is));
    if (n < 0 || n > (Eigen::Index{1} << 32)) throw IoError("dataset cache corrupt frame count");
    seq.sensors_scaled.resize(kSensorChannels, n);
    seq.states.resize(kStateChannels, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kSensorChannels); ++c) seq.sensors_scaled(c, k) = get_f64(is);
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kStateChannels); ++c) seq.states(c, k) = get_f64(is);
    }
  }
  ds.rebuild_index();
  return ds;
}

WindowedDataset read_dataset_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_dataset_cache(is);
}

}  // namespace vobs
