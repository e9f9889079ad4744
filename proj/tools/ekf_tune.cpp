// Grid search over EKF noise settings on the validation split of a run that
// already has `simulate` and `dataset` outputs. Writes a key = value file that
// a run config can pull in with [ekf] file = ...
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "vobs/errors.hpp"
#include "vobs/eval.hpp"
#include "vobs/parallel.hpp"
#include "vobs/pipeline.hpp"

using namespace vobs;

namespace {

MaeVec score(const std::vector<Trajectory>& trajs, const VehicleParams& p, const EkfConfig& c, int workers) {
  std::vector<EstimateTrace> traces(trajs.size());
  parallel_for(trajs.size(), workers, [&](std::size_t i) {
    traces[i] = run_ekf(trajs[i].sensors(), ekf_initial_state(state_of(trajs[i].frames.front().truth), c), p, c);
  });
  MaeAccumulator acc;
  for (std::size_t i = 0; i < trajs.size(); ++i) acc.add(traces[i], trajs[i].truth(), 0);
  return acc.value();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tune EKF process/measurement noise on the validation split"};
  std::string config, out_file, out_dir;
  int workers = 1;
  app.add_option("--config", config, "Run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Run directory (overrides the config)");
  app.add_option("--write", out_file, "Where to write the tuned settings")->required();
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_run_config(config);
    CliOverrides o;
    if (!out_dir.empty()) o.out = std::filesystem::path(out_dir);
    apply_overrides(cfg, o, std::getenv(kOutRootEnv));
    const RunLayout layout{cfg.out_dir};
    const auto manifest = read_manifest(layout.manifest());
    const auto meta = read_dataset_meta(layout.dataset_meta());
    const auto val = load_corpus_files(layout, manifest, meta.val);

    const EkfConfig base = EkfConfig::for_vehicle(cfg.vehicle);
    const MaeVec ref = score(val, cfg.vehicle, base, workers);
    const double q_mult[] = {0.03, 0.1, 0.3, 1, 3, 10, 30};
    const double ray_mult[] = {1, 3, 10, 30, 100, 300, 1000};
    EkfConfig best = base;
    double best_j = 3.0;
    MaeVec best_mae = ref;
    for (double a : q_mult)
      for (double b : q_mult)
        for (double c : q_mult)
          for (double d : ray_mult) {
            EkfConfig e = base;
            e.process_noise_Q = {base.process_noise_Q(0) * a, base.process_noise_Q(1) * b, base.process_noise_Q(2) * c};
            e.measurement_noise_R(2) = base.measurement_noise_R(2) * d;
            MaeVec m;
            try {
              m = score(val, cfg.vehicle, e, workers);
            } catch (const NumericalError&) {
              continue;
            }
            // Unit-free: each channel relative to the untuned filter.
            const double j = m[0] / ref[0] + m[1] / ref[1] + m[2] / ref[2];
            if (j < best_j) {
              best_j = j;
              best = e;
              best_mae = m;
            }
          }
    std::printf("untuned val MAE  vx %.4f  vy %.4f  r %.2f mrad/s\n", ref[0], ref[1], ref[2]);
    std::printf("tuned   val MAE  vx %.4f  vy %.4f  r %.2f mrad/s  (score %.3f of 3)\n", best_mae[0], best_mae[1],
                best_mae[2], best_j);
    std::ofstream out(out_file);
    if (!out) throw IoError("cannot write " + out_file);
    out << "# EKF noise settings, grid-searched on the validation split of " << std::filesystem::path(config).filename().string() << "\n"
        << "# Q is a rate (P += Q*dt); R per measurement sample.\n"
        << format_ekf_config(best);
    if (!out) throw IoError("failed writing " + out_file);
    std::cout << "wrote " << out_file << '\n';
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  }
  return 0;
}
