#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vobs/domain.hpp"
#include "vobs/observer_lstm.hpp"

namespace vobs {

// MAE triple in reporting units: vx m/s, vy m/s, yaw rate mrad/s.
using MaeVec = std::array<double, kStateChannels>;

inline constexpr double kMradPerRad = 1000.0;

// Per-channel mean |est - ref| over samples [first, N). Throws ValidationError
// on length mismatch or when nothing is left to average.
MaeVec mae_from(const EstimateTrace& est, std::span<const GroundTruthState> ref,
                std::size_t first);
MaeVec mae(const EstimateTrace& est, std::span<const GroundTruthState> ref, bool skip_warmup = true);

// Pools absolute errors over several traces, so the result equals the MAE of
// their concatenation.
class MaeAccumulator {
 public:
  void add(const EstimateTrace& est, std::span<const GroundTruthState> ref, std::size_t first);
  MaeVec value() const;
  std::size_t samples() const { return n_; }

 private:
  std::array<double, kStateChannels> sum_{};
  std::size_t n_ = 0;
};

struct SegmentSpec {
  double normal_threshold_g = 0.5;
  double near_limits_max_g = 0.8;

  bool valid() const { return normal_threshold_g > 0.0 && normal_threshold_g < near_limits_max_g; }
};

enum class Segment { normal, near_limits };
const char* to_string(Segment s);

// near_limits iff peak |ay| >= threshold (inclusive), from ground truth.
Segment classify_peak(double peak_abs_ay_mps2, const SegmentSpec& spec = {});

struct SegmentGroups {
  std::vector<std::size_t> normal;
  std::vector<std::size_t> near_limits;
};

SegmentGroups segment_trajectories(std::span<const Trajectory> trajs, const SegmentSpec& spec = {});

struct ObserverMae {
  std::string observer;
  MaeVec mae{};
};

// order[0] is the lowest error; ties go to the lexicographically smaller name.
struct ChannelRanking {
  std::vector<std::string> order;
  const std::string& first() const { return order.front(); }
  const std::string& second() const { return order.at(1); }
  const std::string& last() const { return order.back(); }
};

using RankingTable = std::array<ChannelRanking, kStateChannels>;

// Requires at least two observers.
RankingTable compare_observers(std::span<const ObserverMae> rows);

struct SegmentReport {
  std::string segment;  // "overall", "normal" or "near_limits"
  std::size_t trajectories = 0;
  std::size_t samples = 0;
  std::vector<ObserverMae> rows;
  RankingTable ranking{};  // empty orders when the segment has no samples
};

struct EvalReport {
  std::vector<SegmentReport> segments;
  const SegmentReport& segment(const std::string& name) const;
};

// Estimates of one observer for every evaluated trajectory, in the same order.
struct ObserverRun {
  std::string name;
  std::vector<EstimateTrace> traces;
};

// Per trajectory the first max_k(warmup_len) samples are skipped for every
// observer, so all observers are scored on identical samples.
EvalReport evaluate_observers(std::span<const Trajectory> trajs, std::span<const ObserverRun> runs,
                              const SegmentSpec& spec = {});

// CSV: segment,observer,vx_mae_mps,vy_mae_mps,yaw_rate_mae_mradps,trajectories,samples,vx_rank,vy_rank,yaw_rate_rank
void write_report_csv(const EvalReport& r, const std::filesystem::path& path);
// Observers as columns, channels as rows; markers (1) lowest, (2) next, (L) largest.
std::string format_report_table(const EvalReport& r);

struct Histogram2D {
  int bins = 0;
  double limit_mps2 = 0.0;  // cells span [-limit, limit] on both axes
  std::vector<std::size_t> counts;  // row-major [ax_bin * bins + ay_bin]

  std::size_t at(int ax_bin, int ay_bin) const {
    return counts[static_cast<std::size_t>(ax_bin * bins + ay_bin)];
  }
  std::size_t total() const;
  double edge(int i) const { return -limit_mps2 + 2.0 * limit_mps2 * i / bins; }
};

// Ground-truth (ax, ay) counts; samples outside the range land in the border cells.
Histogram2D friction_circle_hist(std::span<const Trajectory> trajs, int bins,
                                 double limit_mps2 = constants::g_mps2);
void write_friction_hist_csv(const Histogram2D& h, const std::filesystem::path& path);

struct AccelDistribution {
  std::string set;
  std::size_t samples = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;  // |ay| in m/s^2
  double bin_width_mps2 = 0.0;
  std::vector<std::size_t> histogram;  // bins of |ay| from 0; the last bin absorbs the tail
};

// Linear-interpolation quantile of sorted values (Hyndman-Fan type 7).
double quantile_sorted(std::span<const double> sorted, double q);

AccelDistribution accel_distribution(const std::string& set, std::span<const Trajectory> trajs,
                                     int bins = 20, double bin_width_mps2 = 0.5);
void write_accel_distribution_csv(std::span<const AccelDistribution> sets,
                                  const std::filesystem::path& quantiles_path,
                                  const std::filesystem::path& histogram_path);

// One file per channel: t,ref,ours,next_best (physical units; yaw rate rad/s).
void write_overlay_csv(const Trajectory& traj, const EstimateTrace& ours,
                       const EstimateTrace& next_best, std::size_t channel,
                       const std::filesystem::path& path);

}  // namespace vobs
