// Acceptance suite: one PASS/FAIL line per headline criterion, INFO lines for
// supporting numbers. Exit status is nonzero when any criterion fails.
#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vobs/errors.hpp"
#include "vobs/eval.hpp"
#include "vobs/neural/layers.hpp"
#include "vobs/neural/weights_io.hpp"
#include "vobs/observer_baselines.hpp"
#include "vobs/observer_lstm.hpp"
#include "vobs/pipeline.hpp"
#include "vobs/seeding.hpp"
#include "vobs/simulator.hpp"
#include "vobs/training.hpp"

using namespace vobs;
namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const fs::path kConfigDir = VOBS_CONFIG_DIR;

int failures = 0;

void verdict(bool ok, const std::string& id, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& id, const std::string& detail) {
  std::printf("INFO %s: %s\n", id.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckRunOptions opt;
  opt.networks = 100;
  const auto s = cmd_gradcheck(opt);
  const double secs = seconds_since(t0);
  verdict(s.max_rel_error < 1e-4 && secs < 60.0, "gradient_fidelity",
          "100 networks, max rel error " + fmt("%.3g", s.max_rel_error) + " (< 1e-4), " + fmt("%.1f", secs) +
              " s (< 60 s)");
}

// ---------------------------------------------------------------------------

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double cell_error_lstm(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Index I = dim(rng), H = dim(rng);
  auto w = neural::LstmLayerWeights::zeros(I, H);
  for (auto* m : {&w.input_weights, &w.recurrent_weights})
    for (Index k = 0; k < m->size(); ++k) m->data()[k] = u(rng);
  for (Index k = 0; k < w.biases.size(); ++k) w.biases(k) = u(rng);
  VectorXd x(I), h(H), c(H);
  for (Index k = 0; k < I; ++k) x(k) = u(rng);
  for (Index k = 0; k < H; ++k) h(k) = u(rng) / 2, c(k) = u(rng);
  const auto got = neural::lstm_cell_forward(x, h, c, w);
  double err = 0.0;
  for (Index j = 0; j < H; ++j) {
    double a[4];
    for (Index g = 0; g < 4; ++g) {
      double s = w.biases(g * H + j);
      for (Index k = 0; k < I; ++k) s += w.input_weights(g * H + j, k) * x(k);
      for (Index k = 0; k < H; ++k) s += w.recurrent_weights(g * H + j, k) * h(k);
      a[g] = s;
    }
    const double cn = sig(a[1]) * c(j) + sig(a[0]) * std::tanh(a[2]);
    const double hn = sig(a[3]) * std::tanh(cn);
    err = std::max({err, std::abs(got.c(j) - cn), std::abs(got.h(j) - hn)});
  }
  return err;
}

double cell_error_gru(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Index I = dim(rng), H = dim(rng);
  auto w = neural::GruLayerWeights::zeros(I, H);
  for (auto* m : {&w.input_weights, &w.recurrent_weights})
    for (Index k = 0; k < m->size(); ++k) m->data()[k] = u(rng);
  for (Index k = 0; k < w.biases.size(); ++k) w.biases(k) = u(rng);
  VectorXd x(I), h(H);
  for (Index k = 0; k < I; ++k) x(k) = u(rng);
  for (Index k = 0; k < H; ++k) h(k) = u(rng) / 2;
  const VectorXd got = neural::gru_cell_forward(x, h, w);
  std::vector<double> z(static_cast<std::size_t>(H)), r(z.size());
  auto pre = [&](Index g, Index j, const std::vector<double>& hv) {
    double s = w.biases(g * H + j);
    for (Index k = 0; k < I; ++k) s += w.input_weights(g * H + j, k) * x(k);
    for (Index k = 0; k < H; ++k) s += w.recurrent_weights(g * H + j, k) * hv[static_cast<std::size_t>(k)];
    return s;
  };
  std::vector<double> hv(h.data(), h.data() + H), rh(z.size());
  for (Index j = 0; j < H; ++j) {
    z[static_cast<std::size_t>(j)] = sig(pre(0, j, hv));
    r[static_cast<std::size_t>(j)] = sig(pre(1, j, hv));
  }
  for (std::size_t j = 0; j < rh.size(); ++j) rh[j] = r[j] * hv[j];
  double err = 0.0;
  for (Index j = 0; j < H; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double hn = (1.0 - z[jj]) * std::tanh(pre(2, j, rh)) + z[jj] * hv[jj];
    err = std::max(err, std::abs(got(j) - hn));
  }
  return err;
}

void cell_oracles() {
  std::mt19937_64 rng(11);
  double lstm = 0.0, gru = 0.0;
  for (int i = 0; i < 1000; ++i) {
    lstm = std::max(lstm, cell_error_lstm(rng));
    gru = std::max(gru, cell_error_gru(rng));
  }
  verdict(lstm < 1e-12 && gru < 1e-12, "cell_oracles",
          "1000 cases each, max |diff| lstm " + fmt("%.3g", lstm) + ", gru " + fmt("%.3g", gru) + " (< 1e-12)");
}

// ---------------------------------------------------------------------------

Mat3 fd_jac(const std::function<Vec3(const Vec3&)>& f, const Vec3& x) {
  Mat3 J;
  for (int j = 0; j < 3; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
    Vec3 a = x, b = x;
    a(j) += h;
    b(j) -= h;
    J.col(j) = (f(a) - f(b)) / (2 * h);
  }
  return J;
}

void ekf_correctness() {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;

  // Linear system through the shared Kalman core against a textbook filter.
  const Mat3 F = Mat3::Identity() + 0.05 * Mat3::NullaryExpr([&] { return n(rng); });
  const Mat3 H = Mat3::Identity() + 0.3 * Mat3::NullaryExpr([&] { return n(rng); });
  const Mat3 Q = Vec3(0.02, 0.01, 0.005).asDiagonal();
  const Mat3 R = Vec3(0.1, 0.05, 0.2).asDiagonal();
  Vec3 truth(1.0, -0.5, 0.2), x = Vec3::Zero();
  Mat3 P = Mat3::Identity();
  EkfState s;
  double lin = 0.0;
  for (int k = 0; k < 1000; ++k) {
    truth = F * truth + 0.1 * Vec3(n(rng), n(rng), n(rng));
    const Vec3 z = H * truth + 0.2 * Vec3(n(rng), n(rng), n(rng));
    x = F * x;
    P = F * P * F.transpose() + Q;
    const Mat3 K = P * H.transpose() * (H * P * H.transpose() + R).inverse();
    x += K * (z - H * x);
    P = (Mat3::Identity() - K * H) * P;
    s = kf_predict(s, F * s.x, F, Q);
    s = kf_update(s, z, H * s.x, H, R);
    lin = std::max({lin, (s.x - x).cwiseAbs().maxCoeff(), (s.P - P).cwiseAbs().maxCoeff()});
  }

  const VehicleParams p;
  const EkfConfig c = EkfConfig::for_vehicle(p);
  std::uniform_real_distribution<double> vx(3.0, 35.0), vy(-1.0, 1.0), r(-0.6, 0.6), d(-0.3, 0.3), a(-6, 6);
  double jac = 0.0;
  for (int i = 0; i < 500; ++i) {
    const Vec3 xs(vx(rng), vy(rng), r(rng));
    const EkfInput u{a(rng), d(rng)};
    const Mat3 Fa = ekf_transition_jacobian(xs, u, p, c, 0.02);
    const Mat3 Fn = fd_jac([&](const Vec3& v) { return ekf_transition(v, u, p, c, 0.02); }, xs);
    const Mat3 Ha = ekf_measurement_jacobian(xs, u.steering_rad, p, c);
    const Mat3 Hn = fd_jac([&](const Vec3& v) { return ekf_measurement(v, u.steering_rad, p, c); }, xs);
    jac = std::max({jac, ((Fa - Fn).array() / (1.0 + Fn.array().abs())).abs().maxCoeff(),
                    ((Ha - Hn).array() / (1.0 + Hn.array().abs())).abs().maxCoeff()});
  }

  EkfState e = ekf_initial_state({10, 0, 0}, c);
  double min_eig = 1.0, asym = 0.0;
  for (int k = 0; k < 100000; ++k) {
    e.x = Vec3(vx(rng), vy(rng), r(rng));
    const double delta = d(rng) * 0.6;
    e = ekf_predict(e, {n(rng), delta}, p, c, 0.02);
    const Vec3 h = ekf_measurement(e.x, delta, p, c);
    e = ekf_update(e, {h(0) + 0.03 * n(rng), h(1) + 0.002 * n(rng), h(2) + 0.5 * n(rng)}, delta, p, c);
    asym = std::max(asym, (e.P - e.P.transpose()).cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat3>(e.P).eigenvalues().minCoeff());
  }
  verdict(lin < 1e-10 && jac < 1e-6 && min_eig >= -1e-12 && asym == 0.0, "ekf_correctness",
          "linear KF max |diff| " + fmt("%.3g", lin) + " (< 1e-10); Jacobian rel err " + fmt("%.3g", jac) +
              " (< 1e-6); min eig(P) over 1e5 steps " + fmt("%.3g", min_eig) + " (>= 0), asymmetry " +
              fmt("%.3g", asym));
}

// ---------------------------------------------------------------------------

void simulator_physics() {
  const VehicleParams p;
  ManeuverScript circle;
  circle.name = "circle";
  circle.duration_s = 30.0;
  circle.initial.vx_mps = 15.0;
  circle.control_law = [](double) { return Setpoint::track(1.0 / 50.0, 15.0); };
  const auto g = simulate(circle, p).truth.back();
  const double steady = std::abs(g.ay_mps2 - g.vx_mps * g.yaw_rate_radps) / std::abs(g.ay_mps2);

  const auto script = builtin_script(ManeuverKind::slalom, 0.8, 10.0, 5);
  const auto a = simulate(script, p, 0.002, 10).truth.back();
  const auto b = simulate(script, p, 0.001, 20).truth.back();
  const double halving = std::max({std::abs(a.x_m - b.x_m), std::abs(a.y_m - b.y_m), std::abs(a.yaw_rad - b.yaw_rad),
                                   std::abs(a.vx_mps - b.vx_mps), std::abs(a.vy_mps - b.vy_mps),
                                   std::abs(a.yaw_rate_radps - b.yaw_rate_radps)});

  const TireParams t;
  double lo = 0.0, hi = 0.5;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    if (pacejka_lateral_force(x1, 7000.0, t) < pacejka_lateral_force(x2, 7000.0, t)) lo = x1;
    else hi = x2;
  }
  const double closed = std::tan(std::numbers::pi / (2.0 * t.shape_factor_C)) / t.stiffness_factor_B;
  const double peak = std::max(std::abs(0.5 * (lo + hi) - closed), std::abs(pacejka_peak_slip(t) - closed));
  verdict(steady < 0.01 && halving < 1e-6 && peak < 1e-6, "simulator_physics",
          "steady cornering |ay - vx*r|/|ay| " + fmt("%.3g", steady) + " (< 0.01); RK4 halving " +
              fmt("%.3g", halving) + " (< 1e-6); Pacejka peak offset " + fmt("%.3g", peak) + " (< 1e-6)");
}

// ---------------------------------------------------------------------------

void ranking_reproduction() {
  struct Case {
    const char* name;
    std::array<double, 5> v;
    const char *first, *second, *last;
  };
  const Case cases[] = {
      {"normal vx", {0.2, 0.072, 0.045, 0.054, 0.040}, "Ours", "KN", "DBM"},
      {"normal vy", {0.052, 0.038, 0.095, 0.023, 0.021}, "Ours", "GRU", "KN"},
      {"normal yaw", {4.51, 4.52, 4.54, 4.68, 2.94}, "Ours", "DBM", "GRU"},
      {"mixed vx", {0.12, 0.084, 0.041, 0.059, 0.039}, "Ours", "KN", "DBM"},
      {"mixed vy", {0.049, 0.038, 0.055, 0.014, 0.011}, "Ours", "GRU", "KN"},
      {"mixed yaw", {2.15, 2.48, 2.52, 4.02, 2.11}, "Ours", "DBM", "GRU"},
      {"limits vx", {0.48, 0.13, 0.10, 0.091, 0.079}, "Ours", "GRU", "DBM"},
      {"limits vy", {0.18, 0.10, 0.10, 0.068, 0.065}, "Ours", "GRU", "DBM"},
      {"limits yaw", {15.8, 17.0, 18.5, 16.1, 9.2}, "Ours", "DBM", "KN"},
  };
  const char* names[5] = {"DBM", "4WM", "KN", "GRU", "Ours"};
  int ok = 0;
  std::string bad;
  for (const auto& c : cases) {
    std::vector<ObserverMae> rows;
    for (int i = 0; i < 5; ++i) rows.push_back({names[i], {c.v[i], 0.0, 0.0}});
    const auto r = compare_observers(rows)[0];
    if (r.first() == c.first && r.second() == c.second && r.last() == c.last) ++ok;
    else bad += std::string(" ") + c.name;
  }
  verdict(ok == 9, "ranking_reproduction", std::to_string(ok) + "/9 first/second/last orderings" + bad);
}

// ---------------------------------------------------------------------------

struct SeedOutcome {
  std::uint64_t seed = 0;
  EvalReport report;
  EvalReport teacher_forced;
  RunConfig cfg;
};

RunConfig e2e_config(std::uint64_t seed, const fs::path& dir) {
  RunConfig cfg = load_run_config(kConfigDir / "reference.cfg");
  std::vector<ModelSpec> lstms;
  for (const auto& m : cfg.models)
    if (m.kind == ModelKind::lstm) lstms.push_back(m);
  cfg.models = lstms;
  cfg.master_seed = seed;
  cfg.out_dir = dir;
  cfg.validate();
  return cfg;
}

SeedOutcome run_seed(std::uint64_t seed, const fs::path& dir, bool reuse) {
  SeedOutcome o;
  o.seed = seed;
  o.cfg = e2e_config(seed, dir);
  const RunLayout L{dir};
  if (!(reuse && fs::exists(L.report_csv()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream log(dir / "pipeline.log");
    const auto t0 = std::chrono::steady_clock::now();
    cmd_simulate(o.cfg, &log);
    cmd_dataset(o.cfg, &log);
    cmd_train(o.cfg, false, &log);
    info("e2e.seed" + std::to_string(seed), "trained in " + fmt("%.0f", seconds_since(t0)) + " s");
    cmd_evaluate(o.cfg, &log);
  }
  o.report = read_report_csv(L.report_csv());
  o.teacher_forced = read_report_csv(L.teacher_forced_csv());
  return o;
}

const MaeVec& mae_of(const SegmentReport& s, const std::string& obs) {
  for (const auto& r : s.rows)
    if (r.observer == obs) return r.mae;
  throw ValidationError("observer " + obs + " missing from segment " + s.segment);
}

std::string triple(const MaeVec& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(%.4f, %.4f, %.2f)", m[0], m[1], m[2]);
  return buf;
}

double final_train_loss_ratio(const fs::path& log_csv) {
  std::ifstream in(log_csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> train;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string a, b;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    train.push_back(std::stod(b));
  }
  if (train.size() < 2) return 0.0;
  return train.front() / *std::min_element(train.begin() + 1, train.end());
}

// Last time |error| reaches the threshold; 0 if it never does.
double settling_time(const EstimateTrace& tr, std::span<const GroundTruthState> truth, double thr) {
  double last = 0.0;
  for (std::size_t k = tr.warmup_len; k < tr.size(); ++k)
    if (std::abs(tr.estimates[k][0] - truth[k].vx_mps) >= thr) last = truth[k].t_s - truth[tr.warmup_len].t_s;
  return last;
}

void end_to_end(const fs::path& work, bool reuse) {
  std::vector<SeedOutcome> outcomes;
  for (std::uint64_t seed : {1u, 2u, 3u}) outcomes.push_back(run_seed(seed, work / ("seed" + std::to_string(seed)), reuse));

  const std::string ours = "lstm", ablation = "lstm_no_noise";
  const std::string ekf = outcomes.front().cfg.ekf_name;
  bool a = true, b = true, c = true;
  std::string da, db, dc;
  for (const auto& o : outcomes) {
    const std::string tag = " seed" + std::to_string(o.seed);
    const auto& all = o.report.segment("overall");
    const auto& near = o.report.segment("near_limits");
    const auto& normal = o.report.segment("normal");
    const MaeVec mo = mae_of(all, ours), ma = mae_of(all, ablation);
    const bool wa = mo[0] < ma[0] && mo[1] < ma[1] && mo[2] < ma[2];
    a = a && wa;
    da += tag + " " + triple(mo) + " vs " + triple(ma);
    const double lv = mae_of(near, ours)[1], ev = mae_of(near, ekf)[1], en = mae_of(normal, ekf)[1];
    b = b && lv < ev;
    c = c && ev > 2.0 * en;
    db += tag + " " + fmt("%.4f", lv) + " vs " + fmt("%.4f", ev);
    dc += tag + " " + fmt("%.4f", ev) + " vs 2x" + fmt("%.4f", en);

    const RunLayout L{o.cfg.out_dir};
    info("train_loss_reduction" + tag,
         ours + " " + fmt("%.1fx", final_train_loss_ratio(L.train_log(ours))) + ", " + ablation + " " +
             fmt("%.1fx", final_train_loss_ratio(L.train_log(ablation))) + " (epoch 0 over best epoch)");
    const auto& tf = o.teacher_forced.segment("overall");
    info("teacher_forced_vs_closed_loop" + tag,
         ours + " TF " + triple(mae_of(tf, ours)) + " CL " + triple(mo) + "; " + ablation + " TF " +
             triple(mae_of(tf, ablation)) + " CL " + triple(ma));
    info("segments" + tag, std::to_string(normal.trajectories) + " normal / " + std::to_string(near.trajectories) +
                               " near-limit test trajectories");
  }
  verdict(a, "e2e_noise_beats_ablation",
          "overall closed-loop MAE (vx m/s, vy m/s, yaw mrad/s), noise vs no-noise, all channels:" + da);
  verdict(b, "e2e_lstm_beats_ekf_near_limits", "near-limits vy MAE, lstm vs " + ekf + ":" + db);
  verdict(c, "e2e_ekf_degrades_near_limits", ekf + " vy MAE near-limits vs 2x normal:" + dc);

  // Straight drive, initial vx handed to the observer off by +0.5 m/s.
  ManeuverScript straight;
  straight.name = "straight";
  straight.duration_s = 20.0;
  straight.initial.vx_mps = 12.0;
  straight.control_law = [](double) { return Setpoint::track(0.0, 12.0); };
  bool ok = true;
  std::string detail;
  for (const auto& o : outcomes) {
    const RunLayout L{o.cfg.out_dir};
    const auto meta = read_dataset_meta(L.dataset_meta());
    ObserverConfig oc;
    oc.window_len = meta.window_len;
    oc.scaler = meta.scaler;
    SensorNoiseSpec noise = o.cfg.sensor_noise;
    noise.seed = derive_seed(o.seed, "robustness");
    const auto traj = run_maneuver(straight, o.cfg.vehicle, noise);
    const auto truth = traj.truth();
    const auto w = neural::load_weights<neural::LstmLayerWeights>(L.weights(ours));
    StateVec x0 = state_of(truth.front());
    const auto base = run_closed_loop(traj.sensors(), x0, w, oc);
    x0[0] += 0.5;
    const auto kicked = run_closed_loop(traj.sensors(), x0, w, oc);
    const double ts = settling_time(kicked, truth, 0.1);
    const double err0 = std::abs(kicked.estimates[kicked.warmup_len][0] - truth[kicked.warmup_len].vx_mps);
    ok = ok && ts <= 5.0;
    detail += " seed" + std::to_string(o.seed) + " settles at " + fmt("%.2f s", ts) + " (first err " +
              fmt("%.3f", err0) + ", unperturbed settles at " + fmt("%.2f s", settling_time(base, truth, 0.1)) +
              ")";
  }
  verdict(ok, "closed_loop_robustness", "+0.5 m/s vx, |error| < 0.1 m/s for good within 5 s:" + detail);
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

void determinism(const fs::path& work) {
  std::map<std::string, std::string> snaps[2];
  for (int i = 0; i < 2; ++i) {
    RunConfig cfg = load_run_config(kConfigDir / "smoke.cfg");
    cfg.out_dir = work / ("determinism_" + std::to_string(i));
    fs::remove_all(cfg.out_dir);
    cmd_simulate(cfg);
    cmd_dataset(cfg);
    cmd_train(cfg);
    cmd_evaluate(cfg);
    cmd_report(cfg);
    snaps[i] = snapshot(cfg.out_dir);
  }
  std::size_t weights = 0, reports = 0;
  std::vector<std::string> diff;
  for (const auto& [name, bytes] : snaps[0]) {
    if (name.find(".weights.json") != std::string::npos) ++weights;
    if (name.find("report.") != std::string::npos) ++reports;
    const auto it = snaps[1].find(name);
    if (it == snaps[1].end() || it->second != bytes) diff.push_back(name);
  }
  const bool same_set = snaps[0].size() == snaps[1].size();
  verdict(diff.empty() && same_set && weights >= 2 && reports >= 2, "determinism",
          std::to_string(snaps[0].size()) + " files (" + std::to_string(weights) + " weight files, " +
              std::to_string(reports) + " reports) compared byte for byte, " + std::to_string(diff.size()) +
              " differ" + (diff.empty() ? "" : " first: " + diff.front()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = VOBS_ACCEPT_WORK;
  std::vector<std::string> only;
  bool reuse = false;
  app.add_option("--work", work, "Scratch directory for pipeline runs");
  app.add_option("--only", only, "Run only these checks");
  app.add_flag("--reuse", reuse, "Reuse finished end-to-end runs in the scratch directory");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](const std::string& name) { return only.empty() || std::ranges::find(only, name) != only.end(); };
  const std::vector<std::pair<std::string, std::function<void()>>> checks = {
      {"gradient", gradient_fidelity},
      {"cells", cell_oracles},
      {"ekf", ekf_correctness},
      {"simulator", simulator_physics},
      {"ranking", ranking_reproduction},
      {"e2e", [&] { end_to_end(work, reuse); }},
      {"determinism", [&] { determinism(work); }},
  };
  for (const auto& [name, fn] : checks) {
    if (!wanted(name)) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      verdict(false, name, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d failing\n", failures);
  return failures == 0 ? 0 : 1;
}
