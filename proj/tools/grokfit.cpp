// grokfit: sweeps, curve fitting and plot data for grokking measures.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "grokfit/harness.hpp"
#include "grokfit/parallel.hpp"

namespace fs = std::filesystem;
using namespace grokfit;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::int64_t seed = 0;
  std::size_t workers = 0;
  bool overwrite = false;
  bool no_svg = false;
  bool resume = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Flags& f, bool needs_config) {
  auto* c = cmd->add_option("--config", f.config, "key = value configuration file");
  if (needs_config) c->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--workers", f.workers, "parallel workers (default: all cores)");
  cmd->add_flag("--overwrite", f.overwrite, "replace existing output files");
  cmd->add_flag("--no-svg", f.no_svg, "skip SVG charts");
  cmd->add_option("--set", f.overrides, "override a config key (key=value), repeatable");
}

harness::CommonOptions common(const Flags& f) {
  harness::CommonOptions o;
  o.out_dir = f.out;
  o.seed = f.seed;
  o.workers = f.workers == 0 ? default_workers() : f.workers;
  o.overwrite = f.overwrite;
  o.no_svg = f.no_svg;
  o.resume = f.resume;
  return o;
}

io::Config load_config(const Flags& f) {
  io::Config cfg = f.config.empty() ? io::Config{} : io::Config::load(f.config);
  for (const auto& kv : f.overrides) cfg.set(kv);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit Erf curves to accuracy histories and measure grokking gap and sharpness"};
  app.require_subcommand(1);
  Flags f;

  auto* lin = app.add_subcommand("linear-sweep", "analytic linear student-teacher sweep over lambda");
  add_common(lin, f, true);
  auto* mlp = app.add_subcommand("mlp-sweep", "parity MLP concealment sweep");
  add_common(mlp, f, true);
  mlp->add_flag("--resume", f.resume, "reuse completed runs found in the output directory");

  std::string csv;
  double c = 0.0, d = 1.0, margin = 0.05;
  std::string json_out;
  auto* fit = app.add_subcommand("fit", "fit Erf curves to a curve CSV");
  fit->add_option("csv", csv, "curve CSV (epoch,acc_train,acc_val)")->required();
  fit->add_option("--c", c, "baseline accuracy");
  fit->add_option("--d", d, "maximum accuracy");
  fit->add_option("--margin", margin, "transition window margin");
  fit->add_option("--out", json_out, "also write the JSON result to this file");
  fit->add_flag("--overwrite", f.overwrite, "replace an existing output file");

  std::string run_dir;
  auto* plot = app.add_subcommand("plotdata", "plot-ready tables and charts for a sweep directory");
  plot->add_option("dir", run_dir, "sweep output directory")->required();
  plot->add_option("--out", f.out, "plot directory (default: <dir>/plots)");
  plot->add_flag("--overwrite", f.overwrite, "replace existing output files");
  plot->add_flag("--no-svg", f.no_svg, "skip SVG charts");

  std::string check_dir;
  auto* check = app.add_subcommand("selfcheck", "validate emitted files against their schemas");
  check->add_option("dir", check_dir, "directory to validate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : harness::kExitUsage;
  }

  try {
    if (*lin || *mlp) {
      io::Config cfg;
      try {
        cfg = load_config(f);
      } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return harness::kExitUsage;
      }
      return *lin ? harness::cmd_linear_sweep(cfg, common(f), std::cerr)
                  : harness::cmd_mlp_sweep(cfg, common(f), std::cerr);
    }
    if (*fit) {
      std::optional<fs::path> out;
      if (!json_out.empty()) out = json_out;
      return harness::cmd_fit(csv, c, d, out, f.overwrite, std::cout, std::cerr, margin);
    }
    if (*plot) return harness::cmd_plotdata(run_dir, common(f), std::cerr);
    if (*check) return harness::cmd_selfcheck(check_dir, std::cerr);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return harness::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return harness::kExitPartial;
  }
  return harness::kExitUsage;
}
