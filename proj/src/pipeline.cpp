#include "vobs/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "vobs/dataset_cache.hpp"
#include "vobs/errors.hpp"
#include "vobs/neural/weights_io.hpp"
#include "vobs/observer_lstm.hpp"
#include "vobs/parallel.hpp"
#include "vobs/seeding.hpp"
#include "vobs/text_format.hpp"
#include "vobs/trajectory_io.hpp"

namespace vobs {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void allow_keys(const KvSection& s, std::initializer_list<const char*> keys) {
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : s.values())
    if (!ok.count(k)) {
      const std::string where = s.name().empty() ? "top level" : "section [" + s.name() + "]";
      throw ValidationError("unknown config key '" + k + "' at " + where);
    }
}

std::vector<double> parse_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (auto f : text::split(v, ',')) {
    f = text::trim(f);
    if (f.empty()) continue;
    try {
      out.push_back(text::parse_double(f));
    } catch (const ValidationError&) {
      throw ValidationError("key '" + key + "' expects a comma-separated list of numbers");
    }
  }
  return out;
}

std::string intensity_tag(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << std::endl;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed " + what + ": " + e.what());
  }
}

void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError("cannot create directory " + d.string() + ": " + ec.message());
}

json scaler_to_json(const ScalerParams& s) {
  json j;
  for (std::size_t c = 0; c < kSensorChannels; ++c)
    j["sensor"].push_back({{"channel", kSensorChannelNames[c]}, {"min", s.sensor[c].min}, {"max", s.sensor[c].max}});
  for (std::size_t c = 0; c < kStateChannels; ++c)
    j["state"].push_back({{"channel", kStateChannelNames[c]}, {"min", s.state[c].min}, {"max", s.state[c].max}});
  return j;
}

ScalerParams scaler_from_json(const json& j) {
  ScalerParams s;
  if (j.at("sensor").size() != kSensorChannels || j.at("state").size() != kStateChannels)
    throw IoError("scaler block has the wrong number of channels");
  for (std::size_t c = 0; c < kSensorChannels; ++c)
    s.sensor[c] = {j["sensor"][c].at("min").get<double>(), j["sensor"][c].at("max").get<double>()};
  for (std::size_t c = 0; c < kStateChannels; ++c)
    s.state[c] = {j["state"][c].at("min").get<double>(), j["state"][c].at("max").get<double>()};
  return s;
}

const char* to_string(ModelKind k) { return k == ModelKind::lstm ? "lstm" : "gru"; }

neural::Architecture architecture_for(const ModelSpec& m) {
  neural::Architecture a =
      m.kind == ModelKind::lstm ? neural::Architecture::observer() : neural::Architecture::end_to_end();
  a.output_activation = m.output_activation;
  return a;
}

TrainConfig train_config_for(const RunConfig& cfg, const ModelSpec& m) {
  TrainConfig tc = cfg.train;
  tc.workers = cfg.workers;
  // Models of one kind share init and shuffle seeds, so ablations differ only
  // in the configured switch.
  tc.seed = seed_for(cfg, std::string("init/") + to_string(m.kind));
  return tc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (workers < 1) throw ValidationError("workers must be at least 1");
  if (!vehicle.valid()) throw ValidationError("invalid vehicle parameters");
  if (!sensor_noise.valid()) throw ValidationError("invalid sensor noise");
  if (!split.valid()) throw ValidationError("split fractions must be non-negative and sum to 1");
  if (window_len < 1) throw ValidationError("window_len must be at least 1");
  if (!state_noise.valid()) throw ValidationError("state noise deviations must be non-negative");
  if (!train.valid()) throw ValidationError("invalid [train] section (epochs and batch_size must be >= 1)");
  if (!segments.valid()) throw ValidationError("invalid segment thresholds");
  if (ekf_enabled && !ekf.valid()) throw ValidationError("invalid EKF configuration");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (m.name.empty()) throw ValidationError("every [model] needs a name");
    if (!names.insert(m.name).second) throw ValidationError("duplicate model name '" + m.name + "'");
    if (ekf_enabled && m.name == ekf_name) throw ValidationError("model name clashes with the EKF observer");
  }
  if (corpus.empty()) throw ValidationError("config needs at least one [corpus] section");
  for (const auto& c : corpus) {
    if (c.count < 1) throw ValidationError("corpus entry count must be at least 1");
    if (c.intensities.empty()) throw ValidationError("corpus entry needs at least one intensity");
    for (double x : c.intensities)
      if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("intensities must lie in [0, 1]");
    if (c.duration_s && !(*c.duration_s > 0.0)) throw ValidationError("duration_s must be positive");
  }
}

std::uint64_t seed_for(const RunConfig& cfg, std::string_view name, std::uint64_t index) {
  return derive_seed(cfg.master_seed, name, index);
}

EkfConfig parse_ekf_config(const KvSection& s, const VehicleParams& p) {
  EkfConfig c = EkfConfig::for_vehicle(p);
  c.cornering_stiffness_front_NpRad = s.get_double("cornering_stiffness_front_NpRad", c.cornering_stiffness_front_NpRad);
  c.cornering_stiffness_rear_NpRad = s.get_double("cornering_stiffness_rear_NpRad", c.cornering_stiffness_rear_NpRad);
  c.process_noise_Q = {s.get_double("q_vx", c.process_noise_Q(0)), s.get_double("q_vy", c.process_noise_Q(1)),
                       s.get_double("q_yaw_rate", c.process_noise_Q(2))};
  c.measurement_noise_R = {s.get_double("r_wheel_speed", c.measurement_noise_R(0)),
                           s.get_double("r_yaw_rate", c.measurement_noise_R(1)),
                           s.get_double("r_ay", c.measurement_noise_R(2))};
  c.initial_covariance_P0 = {s.get_double("p0_vx", c.initial_covariance_P0(0)),
                             s.get_double("p0_vy", c.initial_covariance_P0(1)),
                             s.get_double("p0_yaw_rate", c.initial_covariance_P0(2))};
  c.min_speed_mps = s.get_double("min_speed_mps", c.min_speed_mps);
  if (!c.valid()) throw ValidationError("EKF configuration: Q, R, P0 and stiffnesses must be positive");
  return c;
}

EkfConfig load_ekf_config(const fs::path& path, const VehicleParams& p) {
  const KvConfig kv = read_kv_config(path);
  if (!kv.sections.empty()) throw ValidationError(path.string() + ": EKF file takes no sections");
  allow_keys(kv.root, {"cornering_stiffness_front_NpRad", "cornering_stiffness_rear_NpRad", "q_vx", "q_vy",
                       "q_yaw_rate", "r_wheel_speed", "r_yaw_rate", "r_ay", "p0_vx", "p0_vy",
                       "p0_yaw_rate", "min_speed_mps"});
  return parse_ekf_config(kv.root, p);
}

std::string format_ekf_config(const EkfConfig& c) {
  std::ostringstream os;
  auto kv = [&](const char* k, double v) { os << k << " = " << text::format_double(v) << '\n'; };
  kv("q_vx", c.process_noise_Q(0));
  kv("q_vy", c.process_noise_Q(1));
  kv("q_yaw_rate", c.process_noise_Q(2));
  kv("r_wheel_speed", c.measurement_noise_R(0));
  kv("r_yaw_rate", c.measurement_noise_R(1));
  kv("r_ay", c.measurement_noise_R(2));
  kv("p0_vx", c.initial_covariance_P0(0));
  kv("p0_vy", c.initial_covariance_P0(1));
  kv("p0_yaw_rate", c.initial_covariance_P0(2));
  kv("min_speed_mps", c.min_speed_mps);
  return os.str();
}

RunConfig parse_run_config(const KvConfig& kv, const fs::path& base_dir) {
  RunConfig cfg;
  const KvSection& root = kv.root;
  allow_keys(root, {"seed", "out", "workers", "ours"});
  cfg.master_seed = static_cast<std::uint64_t>(root.get_int("seed", 0));
  cfg.out_dir = root.get_string("out", "");
  cfg.workers = static_cast<int>(root.get_int("workers", 1));
  cfg.ours = root.get_string("ours", "");

  static const std::set<std::string> known = {"corpus", "vehicle", "sensor_noise", "split", "dataset",
                                              "state_noise", "train", "model", "ekf", "eval"};
  for (const auto& s : kv.sections)
    if (!known.count(s.name())) throw ValidationError("unknown config section [" + s.name() + "]");
  for (const char* single : {"vehicle", "sensor_noise", "split", "dataset", "state_noise", "train", "ekf", "eval"})
    if (kv.sections_named(single).size() > 1)
      throw ValidationError(std::string("section [") + single + "] may appear only once");

  for (const KvSection* s : kv.sections_named("corpus")) {
    allow_keys(*s, {"kind", "intensities", "count", "duration_s"});
    CorpusEntry e;
    e.kind = parse_maneuver_kind(s->require_string("kind"));
    e.intensities = parse_list(s->require_string("intensities"), "intensities");
    e.count = static_cast<int>(s->get_int("count", 1));
    if (s->has("duration_s")) e.duration_s = s->get_double("duration_s", 0.0);
    cfg.corpus.push_back(std::move(e));
  }
  if (const KvSection* s = kv.first_section("vehicle")) {
    allow_keys(*s, {"mass_kg", "lf_m", "lr_m", "track_m", "inertia_z_kgm2", "tire_B", "tire_C", "tire_D"});
    auto& v = cfg.vehicle;
    v.mass_kg = s->get_double("mass_kg", v.mass_kg);
    v.lf_m = s->get_double("lf_m", v.lf_m);
    v.lr_m = s->get_double("lr_m", v.lr_m);
    v.track_m = s->get_double("track_m", v.track_m);
    v.inertia_z_kgm2 = s->get_double("inertia_z_kgm2", v.inertia_z_kgm2);
    for (TireParams* t : {&v.tire_front, &v.tire_rear}) {
      t->stiffness_factor_B = s->get_double("tire_B", t->stiffness_factor_B);
      t->shape_factor_C = s->get_double("tire_C", t->shape_factor_C);
      t->peak_factor_D_per_N = s->get_double("tire_D", t->peak_factor_D_per_N);
    }
  }
  if (const KvSection* s = kv.first_section("sensor_noise")) {
    allow_keys(*s, {"std_ax", "std_ay", "std_yaw_rate", "std_wheel_speed", "std_steering", "bias_ax",
                    "bias_ay", "bias_yaw_rate", "bias_wheel_speed", "bias_steering"});
    auto read = [&](ChannelValues& cv, const std::string& prefix) {
      cv.ax = s->get_double(prefix + "ax", cv.ax);
      cv.ay = s->get_double(prefix + "ay", cv.ay);
      cv.yaw_rate = s->get_double(prefix + "yaw_rate", cv.yaw_rate);
      cv.wheel_speed = s->get_double(prefix + "wheel_speed", cv.wheel_speed);
      cv.steering = s->get_double(prefix + "steering", cv.steering);
    };
    read(cfg.sensor_noise.std_dev, "std_");
    read(cfg.sensor_noise.bias, "bias_");
  }
  if (const KvSection* s = kv.first_section("split")) {
    allow_keys(*s, {"train", "val", "test"});
    cfg.split.train = s->get_double("train", cfg.split.train);
    cfg.split.val = s->get_double("val", cfg.split.val);
    cfg.split.test = s->get_double("test", cfg.split.test);
  }
  if (const KvSection* s = kv.first_section("dataset")) {
    allow_keys(*s, {"window_len"});
    const long long w = s->get_int("window_len", static_cast<long long>(cfg.window_len));
    if (w < 1) throw ValidationError("window_len must be at least 1");
    cfg.window_len = static_cast<std::size_t>(w);
  }
  if (const KvSection* s = kv.first_section("state_noise")) {
    allow_keys(*s, {"std_v_mps", "std_yaw_rate_radps"});
    cfg.state_noise.std_v_mps = s->get_double("std_v_mps", cfg.state_noise.std_v_mps);
    cfg.state_noise.std_yaw_rate_radps = s->get_double("std_yaw_rate_radps", cfg.state_noise.std_yaw_rate_radps);
  }
  if (const KvSection* s = kv.first_section("train")) {
    allow_keys(*s, {"epochs", "batch_size", "learning_rate", "shuffle", "window_stride", "val_stride",
                    "lr_drop_epoch", "lr_drop_factor"});
    auto& t = cfg.train;
    t.epochs = static_cast<int>(s->get_int("epochs", t.epochs));
    t.batch_size = static_cast<int>(s->get_int("batch_size", t.batch_size));
    t.learning_rate = s->get_double("learning_rate", t.learning_rate);
    t.shuffle = s->get_bool("shuffle", t.shuffle);
    t.window_stride = static_cast<int>(s->get_int("window_stride", t.window_stride));
    t.val_stride = static_cast<int>(s->get_int("val_stride", t.val_stride));
    t.lr_drop_epoch = static_cast<int>(s->get_int("lr_drop_epoch", t.lr_drop_epoch));
    t.lr_drop_factor = s->get_double("lr_drop_factor", t.lr_drop_factor);
  }
  for (const KvSection* s : kv.sections_named("model")) {
    allow_keys(*s, {"name", "kind", "state_noise", "output_activation"});
    ModelSpec m;
    m.name = s->require_string("name");
    const std::string k = s->get_string("kind", "lstm");
    if (k == "lstm") m.kind = ModelKind::lstm;
    else if (k == "gru") m.kind = ModelKind::gru;
    else throw ValidationError("model '" + m.name + "': kind must be lstm or gru, got '" + k + "'");
    m.state_noise = s->get_bool("state_noise", m.kind == ModelKind::lstm);
    if (m.kind == ModelKind::gru && m.state_noise)
      throw ValidationError("model '" + m.name + "': the GRU observer has no state input to perturb");
    m.output_activation = neural::parse_activation(s->get_string("output_activation", "sigmoid"));
    cfg.models.push_back(std::move(m));
  }
  cfg.ekf = EkfConfig::for_vehicle(cfg.vehicle);
  if (const KvSection* s = kv.first_section("ekf")) {
    allow_keys(*s, {"enabled", "name", "file", "cornering_stiffness_front_NpRad", "cornering_stiffness_rear_NpRad",
                    "q_vx", "q_vy", "q_yaw_rate", "r_wheel_speed", "r_yaw_rate", "r_ay", "p0_vx", "p0_vy",
                    "p0_yaw_rate", "min_speed_mps"});
    cfg.ekf_enabled = s->get_bool("enabled", true);
    cfg.ekf_name = s->get_string("name", cfg.ekf_name);
    KvSection merged;
    if (auto file = s->find("file")) {
      fs::path p = *file;
      if (p.is_relative()) p = base_dir / p;
      const KvConfig ek = read_kv_config(p);
      for (const auto& [k, v] : ek.root.values()) merged.set(k, v);
    }
    for (const auto& [k, v] : s->values())
      if (k != "enabled" && k != "name" && k != "file") merged.set(k, v);
    cfg.ekf = parse_ekf_config(merged, cfg.vehicle);
  }
  if (const KvSection* s = kv.first_section("eval")) {
    allow_keys(*s, {"normal_threshold_g", "near_limits_max_g", "initial_vx_offset_mps"});
    cfg.segments.normal_threshold_g = s->get_double("normal_threshold_g", cfg.segments.normal_threshold_g);
    cfg.segments.near_limits_max_g = s->get_double("near_limits_max_g", cfg.segments.near_limits_max_g);
    cfg.initial_vx_offset_mps = s->get_double("initial_vx_offset_mps", 0.0);
  }
  if (cfg.ours.empty() && !cfg.models.empty()) cfg.ours = cfg.models.front().name;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  const KvConfig kv = read_kv_config(path);
  try {
    return parse_run_config(kv, path.parent_path());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

fs::path resolve_out_dir(const std::optional<fs::path>& flag, const fs::path& from_config,
                         const char* env_root) {
  const fs::path root = (env_root && *env_root) ? fs::path(env_root) : fs::current_path();
  fs::path chosen = flag ? *flag : from_config;
  if (chosen.empty()) return root / "run";
  if (chosen.is_relative()) return root / chosen;
  return chosen;
}

void apply_overrides(RunConfig& cfg, const CliOverrides& o, const char* env_root) {
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  cfg.out_dir = resolve_out_dir(o.out, cfg.out_dir, env_root);
  cfg.validate();
}

// ---------------------------------------------------------------------------
// Corpus

std::vector<PlannedScript> plan_corpus(const RunConfig& cfg) {
  std::vector<PlannedScript> plan;
  std::size_t idx = 0;
  for (const auto& c : cfg.corpus)
    for (double intensity : c.intensities)
      for (int k = 0; k < c.count; ++k, ++idx) {
        PlannedScript ps;
        ps.entry.script_seed = seed_for(cfg, "script", idx);
        ps.entry.sensor_seed = seed_for(cfg, "sensor", idx);
        ps.script = builtin_script(c.kind, intensity, c.duration_s, ps.entry.script_seed);
        ps.script.name = stratum_label(c.kind, intensity);
        char num[16];
        std::snprintf(num, sizeof num, "%04zu", idx);
        ps.entry.file = std::string(num) + "_" + std::string(to_string(c.kind)) + "_" + intensity_tag(intensity) + ".csv";
        ps.entry.label = ps.script.name;
        ps.entry.kind = std::string(to_string(c.kind));
        ps.entry.intensity = intensity;
        ps.entry.duration_s = ps.script.duration_s;
        if (!ps.script.valid()) throw ValidationError("invalid maneuver script for " + ps.entry.file);
        plan.push_back(std::move(ps));
      }
  return plan;
}

CorpusManifest cmd_simulate(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.corpus.empty()) throw ValidationError("config has no [corpus] entries");
  const RunLayout layout{cfg.out_dir};
  // Every script is validated and simulated before anything is written.
  const auto plan = plan_corpus(cfg);
  std::vector<Trajectory> trajs(plan.size());
  parallel_for(plan.size(), cfg.workers, [&](std::size_t i) {
    SensorNoiseSpec noise = cfg.sensor_noise;
    noise.seed = plan[i].entry.sensor_seed;
    trajs[i] = run_maneuver(plan[i].script, cfg.vehicle, noise);
  });

  CorpusManifest m;
  m.master_seed = cfg.master_seed;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    ManifestEntry e = plan[i].entry;
    e.samples = trajs[i].size();
    e.peak_abs_ay_mps2 = trajs[i].peak_abs_ay_mps2();
    e.regime = classify_peak(e.peak_abs_ay_mps2, cfg.segments) == Segment::near_limits ? "high_g" : "low_g";
    m.total_samples += e.samples;
    m.total_duration_s += e.duration_s;
    (e.regime == "high_g" ? m.has_high_g : m.has_low_g) = true;
    m.trajectories.push_back(std::move(e));
  }

  ensure_dir(layout.root);
  const fs::path staging = layout.root / "corpus.tmp";
  std::error_code ec;
  fs::remove_all(staging, ec);
  ensure_dir(staging);
  for (std::size_t i = 0; i < plan.size(); ++i) write_trajectory_csv(staging / m.trajectories[i].file, trajs[i]);

  json j;
  j["master_seed"] = m.master_seed;
  j["frame_rate_hz"] = 1.0 / constants::dt_s;
  j["trajectory_count"] = m.trajectories.size();
  j["total_samples"] = m.total_samples;
  j["total_duration_s"] = m.total_duration_s;
  j["has_low_g"] = m.has_low_g;
  j["has_high_g"] = m.has_high_g;
  j["regime_threshold_g"] = cfg.segments.normal_threshold_g;
  for (const auto& e : m.trajectories)
    j["trajectories"].push_back({{"file", e.file},
                                 {"label", e.label},
                                 {"kind", e.kind},
                                 {"intensity", e.intensity},
                                 {"duration_s", e.duration_s},
                                 {"samples", e.samples},
                                 {"script_seed", e.script_seed},
                                 {"sensor_seed", e.sensor_seed},
                                 {"peak_abs_ay_mps2", e.peak_abs_ay_mps2},
                                 {"peak_abs_ay_g", e.peak_abs_ay_mps2 / constants::g_mps2},
                                 {"regime", e.regime}});
  write_text_file(staging / "manifest.json", j.dump(1) + "\n");

  fs::remove_all(layout.corpus(), ec);
  fs::rename(staging, layout.corpus(), ec);
  if (ec) throw IoError("cannot move corpus into place: " + ec.message());
  std::ostringstream os;
  os << "simulate: " << m.trajectories.size() << " trajectories, " << m.total_samples << " samples ("
     << (m.has_low_g ? "low-g" : "") << (m.has_low_g && m.has_high_g ? " + " : "")
     << (m.has_high_g ? "high-g" : "") << ") -> " << layout.corpus().string();
  log_line(log, os.str());
  return m;
}

CorpusManifest read_manifest(const fs::path& path) {
  const json j = read_json(path, "corpus manifest");
  try {
    CorpusManifest m;
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.total_samples = j.at("total_samples").get<std::size_t>();
    m.total_duration_s = j.at("total_duration_s").get<double>();
    m.has_low_g = j.at("has_low_g").get<bool>();
    m.has_high_g = j.at("has_high_g").get<bool>();
    for (const auto& t : j.at("trajectories")) {
      ManifestEntry e;
      e.file = t.at("file").get<std::string>();
      e.label = t.at("label").get<std::string>();
      e.kind = t.at("kind").get<std::string>();
      e.intensity = t.at("intensity").get<double>();
      e.duration_s = t.at("duration_s").get<double>();
      e.samples = t.at("samples").get<std::size_t>();
      e.script_seed = t.at("script_seed").get<std::uint64_t>();
      e.sensor_seed = t.at("sensor_seed").get<std::uint64_t>();
      e.peak_abs_ay_mps2 = t.at("peak_abs_ay_mps2").get<double>();
      e.regime = t.at("regime").get<std::string>();
      m.trajectories.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed corpus manifest: " + e.what());
  }
}

std::vector<Trajectory> load_corpus_files(const RunLayout& layout, const CorpusManifest& manifest,
                                          const std::vector<std::string>& files) {
  std::map<std::string, std::string> labels;
  for (const auto& e : manifest.trajectories) labels[e.file] = e.label;
  std::vector<Trajectory> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    auto it = labels.find(f);
    if (it == labels.end()) throw IoError("trajectory " + f + " is not listed in the corpus manifest");
    out.push_back(read_trajectory_csv(layout.corpus() / f, it->second));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

DatasetMeta cmd_dataset(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const RunLayout layout{cfg.out_dir};
  const CorpusManifest manifest = read_manifest(layout.manifest());
  std::vector<std::string> files;
  for (const auto& e : manifest.trajectories) files.push_back(e.file);
  const std::vector<Trajectory> trajs = load_corpus_files(layout, manifest, files);

  SplitSpec split = cfg.split;
  split.seed = seed_for(cfg, "split");
  const SplitAssignment a = split_dataset(trajs, split);
  const auto train = select(trajs, a.train);
  const auto val = select(trajs, a.val);
  const auto test = select(trajs, a.test);
  const ScalerParams scaler = fit_scaler(train);

  DatasetMeta meta;
  meta.window_len = cfg.window_len;
  meta.scaler = scaler;
  for (auto i : a.train) meta.train.push_back(files[i]);
  for (auto i : a.val) meta.val.push_back(files[i]);
  for (auto i : a.test) meta.test.push_back(files[i]);

  ensure_dir(layout.dataset());
  const std::pair<const char*, const std::vector<Trajectory>*> sets[] = {{"train", &train}, {"val", &val}, {"test", &test}};
  std::size_t* counts[] = {&meta.train_windows, &meta.val_windows, &meta.test_windows};
  json jcounts;
  for (std::size_t s = 0; s < 3; ++s) {
    const WindowedDataset ds = build_windowed_dataset(*sets[s].second, scaler, cfg.window_len);
    write_dataset_cache(layout.dataset() / (std::string(sets[s].first) + ".vobs"), ds);
    *counts[s] = ds.size();
    std::size_t frames = 0;
    for (const auto& t : *sets[s].second) frames += t.size();
    jcounts[sets[s].first] = {{"trajectories", sets[s].second->size()}, {"frames", frames}, {"windows", ds.size()}};
  }

  json j;
  j["window_len"] = meta.window_len;
  j["seeds"] = {{"master", cfg.master_seed}, {"split", split.seed}};
  j["fractions"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  j["counts"] = jcounts;
  j["scaler"] = scaler_to_json(scaler);
  j["split"] = {{"train", meta.train}, {"val", meta.val}, {"test", meta.test}};
  write_text_file(layout.dataset_meta(), j.dump(1) + "\n");
  log_line(log, "dataset: " + std::to_string(meta.train_windows) + " train / " +
                    std::to_string(meta.val_windows) + " val / " + std::to_string(meta.test_windows) +
                    " test windows -> " + layout.dataset().string());
  return meta;
}

DatasetMeta read_dataset_meta(const fs::path& path) {
  const json j = read_json(path, "dataset metadata");
  try {
    DatasetMeta m;
    m.window_len = j.at("window_len").get<std::size_t>();
    m.scaler = scaler_from_json(j.at("scaler"));
    m.train = j.at("split").at("train").get<std::vector<std::string>>();
    m.val = j.at("split").at("val").get<std::vector<std::string>>();
    m.test = j.at("split").at("test").get<std::vector<std::string>>();
    m.train_windows = j.at("counts").at("train").at("windows").get<std::size_t>();
    m.val_windows = j.at("counts").at("val").at("windows").get<std::size_t>();
    m.test_windows = j.at("counts").at("test").at("windows").get<std::size_t>();
    return m;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed dataset metadata: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

template <typename Layer>
void train_one(const RunConfig& cfg, const ModelSpec& m, const WindowedDataset& train,
               const WindowedDataset& val, bool resume, std::ostream* log) {
  const RunLayout layout{cfg.out_dir};
  const TrainConfig tc = train_config_for(cfg, m);
  NoiseSpec noise = m.state_noise ? cfg.state_noise : NoiseSpec::none();
  noise.seed = seed_for(cfg, "state_noise");

  std::optional<ResumeState<Layer>> rs;
  if (resume && fs::exists(layout.checkpoint(m.name))) {
    auto ck = neural::load_weights_with_state<Layer>(layout.checkpoint(m.name));
    if (!ck.optimizer) throw IoError(layout.checkpoint(m.name).string() + ": checkpoint lacks optimizer state");
    ResumeState<Layer> r{std::move(ck.net), std::move(*ck.optimizer), 0, read_training_log_csv(layout.train_log(m.name)), std::nullopt};
    if (!r.log.empty()) r.epochs_completed = r.log.back().epoch;
    if (fs::exists(layout.weights(m.name))) r.best = neural::load_weights<Layer>(layout.weights(m.name));
    log_line(log, "train[" + m.name + "]: resuming after epoch " + std::to_string(r.epochs_completed) +
                      " (optimizer step " + std::to_string(r.optimizer.step) + ")");
    rs = std::move(r);
  }

  auto on_epoch = [&](const EpochLog& e) {
    if (!log) return;
    std::ostringstream os;
    os << "train[" << m.name << "]: epoch " << e.epoch << " train_loss " << std::scientific
       << std::setprecision(4) << e.train_loss << " val_loss " << e.val_loss;
    log_line(log, os.str());
  };
  const auto arch = architecture_for(m);
  const auto init = neural::RecurrentNetwork<Layer>::initialize(arch, tc.seed);
  if (init.recurrent_stack.front().input_dim() != static_cast<neural::Index>(kSensorChannels))
    throw ValidationError("model input width must match the sensor channels");
  if (train.window_len != cfg.window_len)
    throw ValidationError("dataset cache window length differs from the config; rerun `dataset`");
  TrainResult<Layer> r = train_network(init, train, val, noise, tc, rs ? &*rs : nullptr, on_epoch);

  ensure_dir(layout.models());
  neural::save_weights(r.best, layout.weights(m.name));
  neural::save_weights(r.last, layout.checkpoint(m.name), &r.optimizer);
  write_training_log_csv(r.log, layout.train_log(m.name));
  log_line(log, "train[" + m.name + "]: best epoch " + std::to_string(r.best_epoch) + " -> " +
                    layout.weights(m.name).string());
}

}  // namespace

void cmd_train(const RunConfig& cfg, bool resume, std::ostream* log) {
  cfg.validate();
  if (cfg.models.empty()) throw ValidationError("config has no [model] sections to train");
  const RunLayout layout{cfg.out_dir};
  const WindowedDataset train = read_dataset_cache(layout.dataset() / "train.vobs");
  const WindowedDataset val = read_dataset_cache(layout.dataset() / "val.vobs");
  for (const auto& m : cfg.models) {
    if (m.kind == ModelKind::lstm)
      train_one<neural::LstmLayerWeights>(cfg, m, train, val, resume, log);
    else
      train_one<neural::GruLayerWeights>(cfg, m, train, val, resume, log);
  }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

template <typename Layer>
neural::RecurrentNetwork<Layer> load_observer_weights(const RunLayout& layout, const ModelSpec& m) {
  const fs::path p = layout.weights(m.name);
  if (!fs::exists(p))
    throw IoError("observer '" + m.name + "': weight file " + p.string() + " is missing (run `train` first)");
  try {
    return neural::load_weights<Layer>(p);
  } catch (const IoError& e) {
    throw IoError("observer '" + m.name + "': " + e.what());
  }
}

void write_traces(const RunLayout& layout, const ObserverRun& run, const std::vector<std::string>& files) {
  const fs::path dir = layout.traces(run.name);
  ensure_dir(dir);
  for (std::size_t i = 0; i < files.size(); ++i) write_trace_csv(run.traces[i], dir / files[i]);
}

}  // namespace

EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const RunLayout layout{cfg.out_dir};
  const CorpusManifest manifest = read_manifest(layout.manifest());
  const DatasetMeta meta = read_dataset_meta(layout.dataset_meta());
  const std::vector<Trajectory> test = load_corpus_files(layout, manifest, meta.test);
  if (test.empty()) throw ValidationError("test split is empty");
  if (cfg.models.empty() && !cfg.ekf_enabled) throw ValidationError("no observers configured");

  ObserverConfig oc;
  oc.window_len = meta.window_len;
  oc.scaler = meta.scaler;

  std::vector<ObserverRun> runs, teacher_forced;
  for (const auto& m : cfg.models) {
    ObserverRun run{m.name, std::vector<EstimateTrace>(test.size())};
    if (m.kind == ModelKind::lstm) {
      const auto w = load_observer_weights<neural::LstmLayerWeights>(layout, m);
      ObserverRun tf{m.name, std::vector<EstimateTrace>(test.size())};
      parallel_for(test.size(), cfg.workers, [&](std::size_t i) {
        const auto sensors = test[i].sensors();
        const auto truth = test[i].truth();
        StateVec x0 = state_of(truth.front());
        x0[0] += cfg.initial_vx_offset_mps;
        run.traces[i] = run_closed_loop(sensors, x0, w, oc);
        tf.traces[i] = run_teacher_forced(sensors, truth, w, oc);
      });
      teacher_forced.push_back(std::move(tf));
    } else {
      const auto w = load_observer_weights<neural::GruLayerWeights>(layout, m);
      parallel_for(test.size(), cfg.workers, [&](std::size_t i) {
        run.traces[i] = run_gru(test[i].sensors(), w, meta.scaler, meta.window_len, state_of(test[i].frames.front().truth));
      });
    }
    log_line(log, "evaluate: ran " + m.name + " on " + std::to_string(test.size()) + " test trajectories");
    runs.push_back(std::move(run));
  }
  if (cfg.ekf_enabled) {
    ObserverRun run{cfg.ekf_name, std::vector<EstimateTrace>(test.size())};
    parallel_for(test.size(), cfg.workers, [&](std::size_t i) {
      const auto truth = test[i].truth();
      run.traces[i] = run_ekf(test[i].sensors(), ekf_initial_state(state_of(truth.front()), cfg.ekf), cfg.vehicle, cfg.ekf);
    });
    log_line(log, "evaluate: ran " + cfg.ekf_name + " on " + std::to_string(test.size()) + " test trajectories");
    runs.push_back(std::move(run));
  }

  const EvalReport report = evaluate_observers(test, runs, cfg.segments);
  ensure_dir(layout.eval());
  for (const auto& r : runs) write_traces(layout, r, meta.test);
  write_report_csv(report, layout.report_csv());
  write_text_file(layout.report_txt(), format_report_table(report));
  if (!teacher_forced.empty()) {
    // Teacher-forced LSTMs next to the other observers, same samples.
    std::vector<ObserverRun> tf_runs = teacher_forced;
    for (const auto& r : runs) {
      bool dup = false;
      for (const auto& t : tf_runs) dup = dup || t.name == r.name;
      if (!dup) tf_runs.push_back(r);
    }
    write_report_csv(evaluate_observers(test, tf_runs, cfg.segments), layout.teacher_forced_csv());
  }
  log_line(log, "evaluate: report -> " + layout.report_csv().string());
  return report;
}

EvalReport read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  std::string line;
  std::getline(in, line);
  if (text::trim(line) !=
      "segment,observer,vx_mae_mps,vy_mae_mps,yaw_rate_mae_mradps,trajectories,samples,vx_rank,vy_rank,yaw_rate_rank")
    throw IoError(path.string() + ": unexpected report header");
  EvalReport r;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 10) throw IoError(path.string() + ": report rows need 10 fields");
    const std::string seg(f[0]);
    if (r.segments.empty() || r.segments.back().segment != seg) {
      r.segments.push_back({});
      r.segments.back().segment = seg;
    }
    auto& s = r.segments.back();
    try {
      s.rows.push_back({std::string(f[1]), {text::parse_double(f[2]), text::parse_double(f[3]), text::parse_double(f[4])}});
      s.trajectories = static_cast<std::size_t>(text::parse_int(f[5]));
      s.samples = static_cast<std::size_t>(text::parse_int(f[6]));
    } catch (const ValidationError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  for (auto& s : r.segments)
    if (s.samples > 0 && s.rows.size() >= 2) s.ranking = compare_observers(s.rows);
  return r;
}

void cmd_report(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const RunLayout layout{cfg.out_dir};
  const EvalReport report = read_report_csv(layout.report_csv());
  write_text_file(layout.report_txt(), format_report_table(report));

  const CorpusManifest manifest = read_manifest(layout.manifest());
  const DatasetMeta meta = read_dataset_meta(layout.dataset_meta());
  const auto train = load_corpus_files(layout, manifest, meta.train);
  const auto val = load_corpus_files(layout, manifest, meta.val);
  const auto test = load_corpus_files(layout, manifest, meta.test);
  ensure_dir(layout.plots());

  std::vector<Trajectory> all;
  all.insert(all.end(), train.begin(), train.end());
  all.insert(all.end(), val.begin(), val.end());
  all.insert(all.end(), test.begin(), test.end());
  write_friction_hist_csv(friction_circle_hist(all, 41), layout.plots() / "friction_circle.csv");

  const SegmentGroups groups = segment_trajectories(test, cfg.segments);
  std::vector<AccelDistribution> dists = {accel_distribution("train", train), accel_distribution("val", val),
                                          accel_distribution("test", test)};
  const std::pair<const char*, const std::vector<std::size_t>*> segs[] = {{"normal", &groups.normal},
                                                                          {"near_limits", &groups.near_limits}};
  for (const auto& [name, idx] : segs)
    if (!idx->empty()) dists.push_back(accel_distribution(std::string("test_") + name, select(test, *idx)));
  write_accel_distribution_csv(dists, layout.plots() / "accel_quantiles.csv", layout.plots() / "accel_hist.csv");

  // Overlays: the test trajectory with the largest peak |ay| of each segment,
  // "ours" against the best other observer of that segment and channel.
  if (!cfg.ours.empty() && fs::exists(layout.traces(cfg.ours))) {
    for (const auto& [name, idx] : segs) {
      if (idx->empty()) continue;
      const SegmentReport& sr = report.segment(name);
      std::size_t pick = idx->front();
      for (std::size_t i : *idx)
        if (test[i].peak_abs_ay_mps2() > test[pick].peak_abs_ay_mps2()) pick = i;
      const std::string& file = meta.test[pick];
      const EstimateTrace ours = read_trace_csv(layout.traces(cfg.ours) / file);
      for (std::size_t c = 0; c < kStateChannels; ++c) {
        std::string next;
        for (const auto& o : sr.ranking[c].order)
          if (o != cfg.ours) {
            next = o;
            break;
          }
        if (next.empty()) continue;
        const EstimateTrace other = read_trace_csv(layout.traces(next) / file);
        write_overlay_csv(test[pick], ours, other, c,
                          layout.plots() / ("overlay_" + std::string(name) + "_" + kStateChannelNames[c] + ".csv"));
      }
    }
  }
  log_line(log, "report: " + layout.report_txt().string() + ", plot data in " + layout.plots().string());
}

// ---------------------------------------------------------------------------
// Gradient check

GradcheckSummary cmd_gradcheck(const GradcheckRunOptions& opt, std::ostream* log) {
  if (opt.networks < 1) throw ValidationError("gradcheck needs at least one network");
  neural::GradCheckOptions go;
  go.corrupt_gate_gradient = opt.corrupt;
  GradcheckSummary s;
  std::map<std::string, neural::GradEntry> worst;
  std::vector<std::string> order;
  neural::GradCheckResult first;
  for (int n = 0; n < opt.networks; ++n) {
    // Alternate LSTM observers, end-to-end LSTMs and GRUs.
    const std::uint64_t seed = derive_seed(opt.seed, "gradcheck", static_cast<std::uint64_t>(n));
    neural::GradCheckResult r;
    std::string prefix;
    switch (n % 3) {
      case 0: r = neural::random_gradient_check<neural::LstmLayerWeights>(seed, 3, go); prefix = "lstm."; break;
      case 1: r = neural::random_gradient_check<neural::LstmLayerWeights>(seed, 0, go); prefix = "lstm_e2e."; break;
      default: r = neural::random_gradient_check<neural::GruLayerWeights>(seed, 0, go); prefix = "gru."; break;
    }
    if (n == 0) first = r;
    s.max_rel_error = std::max(s.max_rel_error, r.max_rel_error);
    for (auto e : r.worst_per_block) {
      e.block = prefix + e.block;
      auto it = worst.find(e.block);
      if (it == worst.end()) {
        order.push_back(e.block);
        worst.emplace(e.block, e);
      } else if (e.rel_error > it->second.rel_error) {
        it->second = e;
      }
    }
  }
  for (const auto& name : order) s.worst_per_group.push_back(worst.at(name));
  s.passed = s.max_rel_error < opt.tolerance;
  if (opt.csv) neural::write_gradcheck_csv(first, *opt.csv);
  if (log) {
    *log << "gradcheck: " << opt.networks << " random networks (hidden [3,4], window 5), max relative error "
         << std::scientific << std::setprecision(3) << s.max_rel_error << (s.passed ? " < " : " >= ")
         << opt.tolerance << (opt.corrupt ? " [gate gradient corrupted]" : "") << '\n';
    *log << "worst offenders per parameter group:\n";
    for (const auto& e : s.worst_per_group)
      *log << "  " << std::left << std::setw(36) << e.block << " [" << e.index << "] analytic "
           << e.analytic << " numeric " << e.numeric << " rel " << e.rel_error << '\n';
    *log << (s.passed ? "PASS" : "FAIL") << std::endl;
  }
  return s;
}

}  // namespace vobs
