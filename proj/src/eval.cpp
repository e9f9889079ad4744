#include "vobs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "vobs/errors.hpp"
#include "vobs/text_format.hpp"

namespace vobs {
namespace {

constexpr std::array<double, kStateChannels> kReportScale = {1.0, 1.0, kMradPerRad};
constexpr std::array<const char*, kStateChannels> kReportLabels = {"vx (m/s)", "vy (m/s)",
                                                                   "yaw_rate (mrad/s)"};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void check_written(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void MaeAccumulator::add(const EstimateTrace& est, std::span<const GroundTruthState> ref,
                         std::size_t first) {
  if (est.size() != ref.size())
    throw ValidationError("MAE: estimate has " + std::to_string(est.size()) +
                          " samples, reference has " + std::to_string(ref.size()));
  for (std::size_t k = first; k < ref.size(); ++k) {
    const StateVec x = state_of(ref[k]);
    for (std::size_t c = 0; c < kStateChannels; ++c)
      sum_[c] += std::abs(est.estimates[k][c] - x[c]) * kReportScale[c];
    ++n_;
  }
}

MaeVec MaeAccumulator::value() const {
  if (n_ == 0) throw ValidationError("MAE: no samples to average");
  MaeVec m{};
  for (std::size_t c = 0; c < kStateChannels; ++c) m[c] = sum_[c] / static_cast<double>(n_);
  return m;
}

MaeVec mae_from(const EstimateTrace& est, std::span<const GroundTruthState> ref, std::size_t first) {
  MaeAccumulator acc;
  acc.add(est, ref, first);
  return acc.value();
}

MaeVec mae(const EstimateTrace& est, std::span<const GroundTruthState> ref, bool skip_warmup) {
  return mae_from(est, ref, skip_warmup ? est.warmup_len : 0);
}

const char* to_string(Segment s) { return s == Segment::normal ? "normal" : "near_limits"; }

Segment classify_peak(double peak_abs_ay_mps2, const SegmentSpec& spec) {
  return peak_abs_ay_mps2 >= spec.normal_threshold_g * constants::g_mps2 ? Segment::near_limits
                                                                         : Segment::normal;
}

SegmentGroups segment_trajectories(std::span<const Trajectory> trajs, const SegmentSpec& spec) {
  if (!spec.valid()) throw ValidationError("invalid segment thresholds");
  SegmentGroups g;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (classify_peak(trajs[i].peak_abs_ay_mps2(), spec) == Segment::near_limits)
      g.near_limits.push_back(i);
    else
      g.normal.push_back(i);
  }
  return g;
}

RankingTable compare_observers(std::span<const ObserverMae> rows) {
  if (rows.size() < 2) throw ValidationError("ranking needs at least two observers");
  RankingTable table;
  for (std::size_t c = 0; c < kStateChannels; ++c) {
    std::vector<const ObserverMae*> order;
    for (const auto& r : rows) order.push_back(&r);
    std::sort(order.begin(), order.end(), [c](const ObserverMae* a, const ObserverMae* b) {
      if (a->mae[c] != b->mae[c]) return a->mae[c] < b->mae[c];
      return a->observer < b->observer;
    });
    for (const auto* r : order) table[c].order.push_back(r->observer);
  }
  return table;
}

const SegmentReport& EvalReport::segment(const std::string& name) const {
  for (const auto& s : segments)
    if (s.segment == name) return s;
  throw ValidationError("report has no segment '" + name + "'");
}

EvalReport evaluate_observers(std::span<const Trajectory> trajs, std::span<const ObserverRun> runs,
                              const SegmentSpec& spec) {
  if (runs.empty()) throw ValidationError("no observers to evaluate");
  for (const auto& r : runs)
    if (r.traces.size() != trajs.size())
      throw ValidationError("observer '" + r.name + "' has " + std::to_string(r.traces.size()) +
                            " traces for " + std::to_string(trajs.size()) + " trajectories");
  std::vector<std::size_t> skip(trajs.size(), 0);
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (const auto& r : runs) skip[i] = std::max(skip[i], r.traces[i].warmup_len);

  const SegmentGroups groups = segment_trajectories(trajs, spec);
  std::vector<std::size_t> all(trajs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const std::vector<std::pair<std::string, const std::vector<std::size_t>*>> segs = {
      {"overall", &all}, {"normal", &groups.normal}, {"near_limits", &groups.near_limits}};

  EvalReport report;
  for (const auto& [name, members] : segs) {
    SegmentReport s;
    s.segment = name;
    s.trajectories = members->size();
    for (const auto& r : runs) {
      MaeAccumulator acc;
      for (std::size_t i : *members) {
        const auto truth = trajs[i].truth();
        acc.add(r.traces[i], truth, std::min(skip[i], truth.size()));
      }
      s.samples = acc.samples();
      ObserverMae row{r.name, {}};
      if (acc.samples() > 0) row.mae = acc.value();
      else row.mae.fill(std::numeric_limits<double>::quiet_NaN());
      s.rows.push_back(row);
    }
    if (s.samples > 0 && s.rows.size() >= 2) s.ranking = compare_observers(s.rows);
    report.segments.push_back(std::move(s));
  }
  return report;
}

namespace {

std::string rank_of(const ChannelRanking& r, const std::string& name) {
  if (r.order.empty()) return "";
  if (r.first() == name) return "first";
  if (r.order.size() > 2 && r.second() == name) return "second";
  if (r.last() == name) return "last";
  if (r.order.size() == 2 && r.second() == name) return "second";
  return "";
}

}  // namespace

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "segment,observer,vx_mae_mps,vy_mae_mps,yaw_rate_mae_mradps,trajectories,samples,"
         "vx_rank,vy_rank,yaw_rate_rank\n";
  for (const auto& s : r.segments)
    for (const auto& row : s.rows) {
      out << s.segment << ',' << row.observer;
      for (double m : row.mae) out << ',' << text::format_double(m);
      out << ',' << s.trajectories << ',' << s.samples;
      for (std::size_t c = 0; c < kStateChannels; ++c) out << ',' << rank_of(s.ranking[c], row.observer);
      out << '\n';
    }
  check_written(out, path);
}

std::string format_report_table(const EvalReport& r) {
  std::ostringstream os;
  for (const auto& s : r.segments) {
    os << "Segment: " << s.segment << " (" << s.trajectories << " trajectories, " << s.samples
       << " samples)\n";
    os << std::left << std::setw(20) << "State";
    for (const auto& row : s.rows) os << " | " << std::setw(14) << row.observer;
    os << '\n';
    for (std::size_t c = 0; c < kStateChannels; ++c) {
      os << std::left << std::setw(20) << kReportLabels[c];
      for (const auto& row : s.rows) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(c == 2 ? 2 : 4) << row.mae[c];
        const std::string rank = rank_of(s.ranking[c], row.observer);
        if (rank == "first") cell << " (1)";
        else if (rank == "second") cell << " (2)";
        else if (rank == "last") cell << " (L)";
        os << " | " << std::setw(14) << cell.str();
      }
      os << '\n';
    }
    os << '\n';
  }
  os << "(1) lowest error, (2) next to lowest, (L) largest\n";
  return os.str();
}

std::size_t Histogram2D::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

Histogram2D friction_circle_hist(std::span<const Trajectory> trajs, int bins, double limit_mps2) {
  if (bins < 2) throw ValidationError("friction-circle histogram needs at least 2 bins per axis");
  if (!(limit_mps2 > 0.0)) throw ValidationError("friction-circle range must be positive");
  Histogram2D h;
  h.bins = bins;
  h.limit_mps2 = limit_mps2;
  h.counts.assign(static_cast<std::size_t>(bins) * static_cast<std::size_t>(bins), 0);
  auto cell = [&](double a) {
    const double u = (a + limit_mps2) / (2.0 * limit_mps2) * bins;
    return std::clamp(static_cast<int>(std::floor(u)), 0, bins - 1);
  };
  for (const auto& t : trajs)
    for (const auto& f : t.frames)
      ++h.counts[static_cast<std::size_t>(cell(f.truth.ax_mps2) * bins + cell(f.truth.ay_mps2))];
  return h;
}

void write_friction_hist_csv(const Histogram2D& h, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "ax_lo,ax_hi,ay_lo,ay_hi,count\n";
  for (int i = 0; i < h.bins; ++i)
    for (int j = 0; j < h.bins; ++j)
      out << text::format_double(h.edge(i)) << ',' << text::format_double(h.edge(i + 1)) << ','
          << text::format_double(h.edge(j)) << ',' << text::format_double(h.edge(j + 1)) << ','
          << h.at(i, j) << '\n';
  check_written(out, path);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

AccelDistribution accel_distribution(const std::string& set, std::span<const Trajectory> trajs,
                                     int bins, double bin_width_mps2) {
  if (bins < 1 || !(bin_width_mps2 > 0.0)) throw ValidationError("invalid histogram layout");
  std::vector<double> v;
  for (const auto& t : trajs)
    for (const auto& f : t.frames) v.push_back(std::abs(f.truth.ay_mps2));
  if (v.empty()) throw ValidationError("acceleration distribution of '" + set + "' has no samples");
  std::sort(v.begin(), v.end());
  AccelDistribution d;
  d.set = set;
  d.samples = v.size();
  d.min = v.front();
  d.q1 = quantile_sorted(v, 0.25);
  d.median = quantile_sorted(v, 0.5);
  d.q3 = quantile_sorted(v, 0.75);
  d.max = v.back();
  d.bin_width_mps2 = bin_width_mps2;
  d.histogram.assign(static_cast<std::size_t>(bins), 0);
  for (double a : v) {
    const auto b = std::min(static_cast<std::size_t>(a / bin_width_mps2), d.histogram.size() - 1);
    ++d.histogram[b];
  }
  return d;
}

void write_accel_distribution_csv(std::span<const AccelDistribution> sets,
                                  const std::filesystem::path& quantiles_path,
                                  const std::filesystem::path& histogram_path) {
  auto q = open_out(quantiles_path);
  q << "set,samples,min,q1,median,q3,max\n";
  for (const auto& d : sets)
    q << d.set << ',' << d.samples << ',' << text::format_double(d.min) << ','
      << text::format_double(d.q1) << ',' << text::format_double(d.median) << ','
      << text::format_double(d.q3) << ',' << text::format_double(d.max) << '\n';
  check_written(q, quantiles_path);
  auto h = open_out(histogram_path);
  h << "set,bin_lo,bin_hi,count\n";
  for (const auto& d : sets)
    for (std::size_t b = 0; b < d.histogram.size(); ++b) {
      const double lo = d.bin_width_mps2 * static_cast<double>(b);
      const bool tail = b + 1 == d.histogram.size();
      h << d.set << ',' << text::format_double(lo) << ','
        << (tail ? std::string("inf") : text::format_double(lo + d.bin_width_mps2)) << ','
        << d.histogram[b] << '\n';
    }
  check_written(h, histogram_path);
}

void write_overlay_csv(const Trajectory& traj, const EstimateTrace& ours,
                       const EstimateTrace& next_best, std::size_t channel,
                       const std::filesystem::path& path) {
  if (channel >= kStateChannels) throw ValidationError("overlay channel out of range");
  if (ours.size() != traj.size() || next_best.size() != traj.size())
    throw ValidationError("overlay traces must match the trajectory length");
  auto out = open_out(path);
  out << "t,ref,ours,next_best\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const StateVec x = state_of(traj.frames[k].truth);
    out << text::format_double(traj.frames[k].truth.t_s) << ',' << text::format_double(x[channel])
        << ',' << text::format_double(ours.estimates[k][channel]) << ','
        << text::format_double(next_best.estimates[k][channel]) << '\n';
  }
  check_written(out, path);
}

}  // namespace vobs
