#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "vobs/errors.hpp"
#include "vobs/pipeline.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<int> epochs;
};

vobs::RunConfig load(const GlobalFlags& g) {
  if (g.config.empty()) throw vobs::ValidationError("--config is required for this command");
  vobs::RunConfig cfg = vobs::load_run_config(g.config);
  vobs::CliOverrides o;
  o.seed = g.seed;
  if (g.out) o.out = std::filesystem::path(*g.out);
  o.workers = g.workers;
  o.epochs = g.epochs;
  vobs::apply_overrides(cfg, o, std::getenv(vobs::kOutRootEnv));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual vehicle-state observer pipeline: simulate, dataset, train, evaluate, report, gradcheck"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vobs 1.0");
  app.footer(std::string("Relative output paths resolve against $") + vobs::kOutRootEnv +
             " when set, else the working directory.");

  GlobalFlags g;
  app.add_option("--config", g.config, "Run configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed (overrides `seed`)");
  app.add_option("--out", g.out, "Output directory (overrides `out`)");
  app.add_option("--workers", g.workers, "Worker thread cap (overrides `workers`)")->check(CLI::PositiveNumber);
  app.add_option("--epochs", g.epochs, "Training epochs (overrides [train] epochs)")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "Generate the maneuver corpus and its manifest");
  auto* ds = app.add_subcommand("dataset", "Split, fit the scaler and write windowed dataset caches");
  auto* tr = app.add_subcommand("train", "Train every configured model");
  bool resume = false;
  tr->add_flag("--resume", resume, "Continue from the last checkpoint and training log");
  auto* ev = app.add_subcommand("evaluate", "Run all observers over the test split and score them");
  std::optional<double> vx_offset;
  ev->add_option("--initial-vx-offset", vx_offset, "Add this many m/s to the initial vx (robustness studies)");
  auto* rp = app.add_subcommand("report", "Re-render the report table and write plot-data CSVs");
  auto* gc = app.add_subcommand("gradcheck", "Compare BPTT gradients against central differences");
  vobs::GradcheckRunOptions gopt;
  std::optional<std::string> gcsv;
  gc->add_option("--networks", gopt.networks, "Number of random networks")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gopt.tolerance, "Maximum allowed relative error");
  gc->add_option("--csv", gcsv, "Write per-coordinate results of the first network");
  gc->add_flag("--corrupt", gopt.corrupt, "Deliberately corrupt one gate gradient (debug)");

  for (auto* sc : {sim, ds, tr, ev, rp, gc}) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gc) {
      if (g.seed) gopt.seed = *g.seed;
      if (gcsv) gopt.csv = std::filesystem::path(*gcsv);
      return vobs::cmd_gradcheck(gopt, &std::cout).passed ? 0 : 2;
    }
    vobs::RunConfig cfg = load(g);
    if (*sim) vobs::cmd_simulate(cfg, &std::cout);
    else if (*ds) vobs::cmd_dataset(cfg, &std::cout);
    else if (*tr) vobs::cmd_train(cfg, resume, &std::cout);
    else if (*ev) {
      if (vx_offset) cfg.initial_vx_offset_mps = *vx_offset;
      const auto report = vobs::cmd_evaluate(cfg, &std::cout);
      std::cout << vobs::format_report_table(report);
    } else if (*rp) vobs::cmd_report(cfg, &std::cout);
    return 0;
  } catch (const vobs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return vobs::exit_code(e);
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
