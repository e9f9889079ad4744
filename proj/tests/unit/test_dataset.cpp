#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "vobs/dataset.hpp"
#include "vobs/dataset_cache.hpp"
#include "vobs/errors.hpp"

using namespace vobs;

namespace {

Trajectory wavy(const std::string& label, std::size_t n, double phase) {
  Trajectory t;
  t.label = label;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = 0.1 * static_cast<double>(k) + phase;
    TrajectorySample s;
    s.sensor.t_s = s.truth.t_s = 0.02 * static_cast<double>(k);
    s.sensor.ax_mps2 = std::sin(x);
    s.sensor.ay_mps2 = 3.0 * std::cos(x);
    s.sensor.yaw_rate_radps = 0.2 * std::sin(2 * x);
    s.sensor.wheel_speed_rr_mps = 10.0 + std::cos(0.5 * x);
    s.sensor.steering_rad = 0.05 * std::sin(x + 1.0);
    s.truth.vx_mps = 10.0 + std::sin(0.5 * x);
    s.truth.vy_mps = 0.3 * std::sin(x + 0.3);
    s.truth.yaw_rate_radps = 0.2 * std::cos(2 * x);
    s.truth.ay_mps2 = s.sensor.ay_mps2;
    t.frames.push_back(s);
  }
  return t;
}

}  // namespace

TEST(Scaler, MinMaxAndScale) {
  Trajectory t = wavy("a", 3, 0.0);
  for (std::size_t k = 0; k < 3; ++k) t.frames[k].sensor.ax_mps2 = 2.0 + static_cast<double>(k);
  const ScalerParams s = fit_scaler(std::span(&t, 1));
  EXPECT_EQ(s.sensor[0].min, 2.0);
  EXPECT_EQ(s.sensor[0].max, 4.0);
  EXPECT_EQ(s.sensor[0].scale(3.0), 0.5);
}

TEST(Scaler, RoundTrip) {
  const std::vector<Trajectory> ts = {wavy("a", 200, 0.0), wavy("a", 200, 1.0)};
  const ScalerParams s = fit_scaler(ts);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    for (const auto& r : s.sensor) EXPECT_NEAR(r.unscale(r.scale(x)), x, 1e-12);
    const StateVec v{x, -x, 0.5 * x};
    const StateVec back = s.unscale_state(s.scale_state(v));
    for (std::size_t c = 0; c < kStateChannels; ++c) EXPECT_NEAR(back[c], v[c], 1e-12);
  }
}

TEST(Scaler, ConstantChannelNamed) {
  Trajectory t = wavy("a", 50, 0.0);
  for (auto& f : t.frames) f.sensor.steering_rad = 0.01;
  try {
    fit_scaler(std::span(&t, 1));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("steering"), std::string::npos);
  }
  std::vector<Trajectory> none;
  EXPECT_THROW(fit_scaler(none), ValidationError);
}

TEST(Windows, Counts) {
  const auto s = fit_scaler(std::vector<Trajectory>{wavy("a", 200, 0.0)});
  EXPECT_EQ(make_windows(wavy("a", 60, 0.0), s, 50).size(), 11u);
  const auto one = make_windows(wavy("a", 50, 0.0), s, 50);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].t_s, 49 * 0.02);
  EXPECT_TRUE(make_windows(wavy("a", 49, 0.0), s, 50).empty());
  EXPECT_EQ(window_count(60, 50), 11u);
  EXPECT_EQ(window_count(10, 50), 0u);
}

TEST(Windows, ContentsAndAlignment) {
  const Trajectory t = wavy("a", 120, 0.4);
  const auto s = fit_scaler(std::span(&t, 1));
  const auto ws = make_windows(t, s, 50);
  ASSERT_EQ(ws.size(), 71u);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const std::size_t tk = i + 49;
    const auto& w = ws[i];
    ASSERT_EQ(w.window.rows(), 50);
    ASSERT_EQ(w.window.cols(), 5);
    EXPECT_EQ(w.t_s, t.frames[tk].truth.t_s);
    // Last row is the current frame, first row the oldest.
    const auto cur = s.scale_sensors(t.frames[tk].sensor);
    const auto old = s.scale_sensors(t.frames[tk - 49].sensor);
    for (int c = 0; c < 5; ++c) {
      EXPECT_EQ(w.window(49, c), cur[c]);
      EXPECT_EQ(w.window(0, c), old[c]);
    }
    const auto prev = s.scale_state(state_of(t.frames[tk - 1].truth));
    const auto tgt = s.scale_state(state_of(t.frames[tk].truth));
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(w.prev_state[c], prev[c]);
      EXPECT_EQ(w.target[c], tgt[c]);
    }
    for (int r = 0; r < 50; ++r)
      for (int c = 0; c < 5; ++c) {
        EXPECT_GE(w.window(r, c), 0.0);
        EXPECT_LE(w.window(r, c), 1.0);
      }
  }
}

TEST(Windows, HeldOutDataNotClipped) {
  const Trajectory train = wavy("a", 100, 0.0);
  Trajectory test = wavy("a", 100, 0.0);
  for (auto& f : test.frames) f.sensor.ay_mps2 *= 2.0;
  const auto s = fit_scaler(std::span(&train, 1));
  double hi = 0.0;
  for (const auto& w : make_windows(test, s, 10)) hi = std::max(hi, w.window.col(1).maxCoeff());
  EXPECT_GT(hi, 1.2);
}

TEST(Windows, DatasetMaterializeMatchesMakeWindows) {
  const std::vector<Trajectory> ts = {wavy("a", 80, 0.0), wavy("b", 20, 1.0), wavy("c", 65, 2.0)};
  const auto s = fit_scaler(ts);
  const WindowedDataset ds = build_windowed_dataset(ts, s, 30);
  EXPECT_EQ(ds.size(), 51u + 0u + 36u);
  std::size_t i = 0;
  for (const auto& t : ts)
    for (const auto& w : make_windows(t, s, 30)) {
      const auto m = ds.materialize(i++);
      EXPECT_EQ((m.window - w.window).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_EQ(m.prev_state, w.prev_state);
      EXPECT_EQ(m.target, w.target);
      EXPECT_EQ(m.t_s, w.t_s);
    }
}

TEST(Split, BothRegimesEverywhere) {
  std::vector<Trajectory> ts;
  for (int i = 0; i < 10; ++i) ts.push_back(wavy("low_g", 60, i));
  for (int i = 0; i < 10; ++i) ts.push_back(wavy("high_g", 60, i));
  SplitSpec spec;
  spec.seed = 5;
  const auto a = split_dataset(ts, spec);
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    std::set<std::string> labels;
    for (auto i : *part) labels.insert(ts[i].label);
    EXPECT_EQ(labels.size(), 2u);
  }
  // Per stratum: 6/2/2 within one trajectory of target.
  for (const std::string lab : {"low_g", "high_g"}) {
    auto count = [&](const std::vector<std::size_t>& v) {
      return std::count_if(v.begin(), v.end(), [&](std::size_t i) { return ts[i].label == lab; });
    };
    EXPECT_NEAR(count(a.train), 6.0, 1.0);
    EXPECT_NEAR(count(a.val), 2.0, 1.0);
    EXPECT_NEAR(count(a.test), 2.0, 1.0);
  }
  std::set<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), ts.size());
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), ts.size());

  const auto b = split_dataset(ts, spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, SmallStratumReported) {
  std::vector<Trajectory> ts = {wavy("x", 60, 0), wavy("x", 60, 1), wavy("y", 60, 0), wavy("y", 60, 1), wavy("y", 60, 2)};
  try {
    split_dataset(ts, SplitSpec{});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
  SplitSpec bad;
  bad.train = 0.7;
  EXPECT_THROW(split_dataset(ts, bad), ValidationError);
}

TEST(StateNoise, ZeroStdIsIdentity) {
  std::mt19937_64 rng(3);
  const StateVec x{12.0, -0.4, 0.1};
  EXPECT_EQ(inject_state_noise(x, NoiseSpec::none(), rng), x);
}

TEST(StateNoise, StatisticsAndRepeatability) {
  NoiseSpec spec;
  std::mt19937_64 rng(9), rng2(9);
  const StateVec x{10.0, 0.0, 0.0};
  const int n = 100000;
  double s1 = 0, s2 = 0, r1 = 0, r2 = 0;
  for (int i = 0; i < n; ++i) {
    const StateVec y = inject_state_noise(x, spec, rng);
    ASSERT_EQ(y, inject_state_noise(x, spec, rng2));
    s1 += y[0] - 10.0;
    s2 += (y[0] - 10.0) * (y[0] - 10.0);
    r1 += y[2];
    r2 += y[2] * y[2];
  }
  const double sd_v = std::sqrt(s2 / n - (s1 / n) * (s1 / n));
  const double sd_r = std::sqrt(r2 / n - (r1 / n) * (r1 / n));
  EXPECT_NEAR(sd_v, 0.03, 0.02 * 0.03);
  EXPECT_NEAR(sd_r, 0.003, 0.02 * 0.003);
}

TEST(DatasetCache, RoundTripBitExact) {
  const std::vector<Trajectory> ts = {wavy("a@0.50", 70, 0.0), wavy("b", 55, 1.0)};
  const auto ds = build_windowed_dataset(ts, fit_scaler(ts), 20);
  std::stringstream ss;
  write_dataset_cache(ss, ds);
  EXPECT_EQ(ss.str().substr(0, 4), "VOBS");
  const auto back = read_dataset_cache(ss);
  EXPECT_EQ(back.window_len, 20u);
  ASSERT_EQ(back.size(), ds.size());
  ASSERT_EQ(back.sequences.size(), 2u);
  EXPECT_EQ(back.sequences[0].label, "a@0.50");
  for (std::size_t c = 0; c < kSensorChannels; ++c) {
    EXPECT_EQ(back.scaler.sensor[c].min, ds.scaler.sensor[c].min);
    EXPECT_EQ(back.scaler.sensor[c].max, ds.scaler.sensor[c].max);
  }
  for (std::size_t q = 0; q < 2; ++q) {
    EXPECT_TRUE(back.sequences[q].sensors_scaled == ds.sequences[q].sensors_scaled);
    EXPECT_TRUE(back.sequences[q].states == ds.sequences[q].states);
  }
}

TEST(DatasetCache, BadInputsReported) {
  const std::vector<Trajectory> ts = {wavy("a", 70, 0.0)};
  const auto ds = build_windowed_dataset(ts, fit_scaler(ts), 20);
  std::stringstream ss;
  write_dataset_cache(ss, ds);
  const std::string bytes = ss.str();

  std::stringstream magic("XOBS" + bytes.substr(4));
  EXPECT_THROW(read_dataset_cache(magic), IoError);
  std::string v = bytes;
  v[4] = 9;  // version, little-endian low byte
  std::stringstream ver(v);
  EXPECT_THROW(read_dataset_cache(ver), IoError);
  std::stringstream cut(bytes.substr(0, bytes.size() - 13));
  EXPECT_THROW(read_dataset_cache(cut), IoError);
}
