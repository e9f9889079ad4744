#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vobs/dataset.hpp"
#include "vobs/eval.hpp"
#include "vobs/kv_config.hpp"
#include "vobs/neural/gradcheck.hpp"
#include "vobs/neural/layers.hpp"
#include "vobs/observer_baselines.hpp"
#include "vobs/simulator.hpp"
#include "vobs/training.hpp"

namespace vobs {

// Environment variable holding the default output root.
inline constexpr const char* kOutRootEnv = "VOBS_OUT_ROOT";

struct CorpusEntry {
  ManeuverKind kind = ManeuverKind::city_mix;
  std::vector<double> intensities;
  int count = 1;  // trajectories per intensity
  std::optional<double> duration_s;
};

enum class ModelKind { lstm, gru };

struct ModelSpec {
  std::string name;
  ModelKind kind = ModelKind::lstm;
  bool state_noise = true;  // lstm only
  neural::Activation output_activation = neural::Activation::sigmoid;
};

// Everything one reproducible run needs. Child seeds are derived from
// master_seed by name (see seed_for); nothing else introduces randomness.
struct RunConfig {
  std::uint64_t master_seed = 0;
  std::filesystem::path out_dir;
  int workers = 1;

  std::vector<CorpusEntry> corpus;
  VehicleParams vehicle{};
  SensorNoiseSpec sensor_noise{};

  SplitSpec split{};
  std::size_t window_len = kDefaultWindow;

  NoiseSpec state_noise{};
  TrainConfig train{};
  std::vector<ModelSpec> models;

  bool ekf_enabled = true;
  std::string ekf_name = "ekf_dbm";
  EkfConfig ekf{};

  SegmentSpec segments{};
  // Offset added to the initial vx handed to the LSTM observers at evaluation.
  double initial_vx_offset_mps = 0.0;
  // Observer whose traces are plotted as "ours"; defaults to the first model.
  std::string ours;

  void validate() const;
};

// Seeds, by name: script/<i>, sensor/<i>, split, state_noise, shuffle, init/<kind>.
std::uint64_t seed_for(const RunConfig& cfg, std::string_view name, std::uint64_t index = 0);

// Relative paths inside the config (ekf file) resolve against base_dir.
RunConfig parse_run_config(const KvConfig& kv, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Key-value EKF tuning file (q_vx, q_vy, q_yaw_rate, r_wheel_speed, r_yaw_rate,
// r_ay, p0_vx, p0_vy, p0_yaw_rate, min_speed_mps, optional stiffness overrides).
EkfConfig parse_ekf_config(const KvSection& s, const VehicleParams& p);
EkfConfig load_ekf_config(const std::filesystem::path& path, const VehicleParams& p);
std::string format_ekf_config(const EkfConfig& cfg);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> workers;
  std::optional<int> epochs;
};

// --out wins; otherwise the config's `out`. Relative paths resolve against
// $VOBS_OUT_ROOT when set, else the working directory. Without either, the
// run lands in <root>/run.
std::filesystem::path resolve_out_dir(const std::optional<std::filesystem::path>& flag,
                                      const std::filesystem::path& from_config,
                                      const char* env_root);
void apply_overrides(RunConfig& cfg, const CliOverrides& o, const char* env_root);

struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path manifest() const { return corpus() / "manifest.json"; }
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path dataset_meta() const { return dataset() / "dataset.json"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path weights(const std::string& m) const { return models() / (m + ".weights.json"); }
  std::filesystem::path checkpoint(const std::string& m) const { return models() / (m + ".ckpt.json"); }
  std::filesystem::path train_log(const std::string& m) const { return models() / (m + ".log.csv"); }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path traces(const std::string& obs) const { return eval() / "traces" / obs; }
  std::filesystem::path report_csv() const { return eval() / "report.csv"; }
  std::filesystem::path report_txt() const { return eval() / "report.txt"; }
  std::filesystem::path teacher_forced_csv() const { return eval() / "teacher_forced.csv"; }
  std::filesystem::path plots() const { return eval() / "plots"; }
};

struct ManifestEntry {
  std::string file;
  std::string label;
  std::string kind;
  double intensity = 0.0;
  double duration_s = 0.0;
  std::size_t samples = 0;
  std::uint64_t script_seed = 0;
  std::uint64_t sensor_seed = 0;
  double peak_abs_ay_mps2 = 0.0;
  std::string regime;  // "low_g" or "high_g" (peak >= normal threshold)
};

struct CorpusManifest {
  std::uint64_t master_seed = 0;
  std::size_t total_samples = 0;
  double total_duration_s = 0.0;
  bool has_low_g = false;
  bool has_high_g = false;
  std::vector<ManifestEntry> trajectories;
};

CorpusManifest read_manifest(const std::filesystem::path& path);

struct DatasetMeta {
  std::size_t window_len = kDefaultWindow;
  ScalerParams scaler{};
  std::vector<std::string> train, val, test;  // corpus file names
  std::size_t train_windows = 0, val_windows = 0, test_windows = 0;
};

DatasetMeta read_dataset_meta(const std::filesystem::path& path);

// Trajectories named in `files`, labels taken from the manifest.
std::vector<Trajectory> load_corpus_files(const RunLayout& layout, const CorpusManifest& manifest,
                                          const std::vector<std::string>& files);

// Scripts as the corpus section expands them, in file order.
struct PlannedScript {
  ManeuverScript script;
  ManifestEntry entry;  // file/label/kind/intensity/seeds filled in
};
std::vector<PlannedScript> plan_corpus(const RunConfig& cfg);

// Each command logs progress to `log` when non-null.
CorpusManifest cmd_simulate(const RunConfig& cfg, std::ostream* log = nullptr);
DatasetMeta cmd_dataset(const RunConfig& cfg, std::ostream* log = nullptr);
// With resume, a model whose checkpoint exists continues for cfg.train.epochs more epochs.
void cmd_train(const RunConfig& cfg, bool resume = false, std::ostream* log = nullptr);
EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream* log = nullptr);
void cmd_report(const RunConfig& cfg, std::ostream* log = nullptr);

struct GradcheckRunOptions {
  int networks = 100;
  std::uint64_t seed = 0;
  bool corrupt = false;
  double tolerance = 1e-4;
  std::optional<std::filesystem::path> csv;
};

struct GradcheckSummary {
  double max_rel_error = 0.0;
  bool passed = false;
  std::vector<neural::GradEntry> worst_per_group;  // worst coordinate per parameter group
};

GradcheckSummary cmd_gradcheck(const GradcheckRunOptions& opt, std::ostream* log = nullptr);

EvalReport read_report_csv(const std::filesystem::path& path);

}  // namespace vobs
