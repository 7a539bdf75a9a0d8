// Command-line front end; links only the public C API.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "thermophase.h"

namespace {

int fail(tp_status st) {
  std::fprintf(stderr, "error: %s\n", tp_last_error());
  switch (st) {
    case TP_ERR_ARGUMENT: return 2;
    case TP_ERR_CONFIG: return 3;
    case TP_ERR_IO: return 4;
    case TP_ERR_DIVERGED: return 5;
    case TP_ERR_CHECK_FAILED: return 1;
    default: return 6;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermophase: coupled phase-separation / damage / temperature / elasticity "
               "simulation with certified energy and entropy inequalities"};
  app.require_subcommand(1);

  // simulate
  std::string cfg_path, preset, out_dir;
  CLI::App* sim = app.add_subcommand("simulate", "run the time stepper and write an archive");
  CLI::Option* optc = sim->add_option("--config", cfg_path, "configuration file");
  CLI::Option* optp = sim->add_option("--preset", preset, "built-in scenario name");
  sim->add_option("--out", out_dir, "output directory (overrides the config)");
  optc->excludes(optp);

  // check
  std::string traj_dir, window = "steps", report_path;
  CLI::App* chk = app.add_subcommand("check", "evaluate all trajectory monitors");
  chk->add_option("--traj", traj_dir, "trajectory archive directory")->required();
  chk->add_option("--window", window, "'steps' (default) or 'all' grid windows");
  chk->add_option("--report", report_path, "write the full report CSV here");

  // convergence
  std::string conv_case = "heat";
  int levels = 3;
  CLI::App* conv = app.add_subcommand("convergence", "manufactured-solution order study");
  conv->add_option("--case", conv_case, "'heat' or 'elasticity'")->required();
  conv->add_option("--levels", levels, "refinement levels (default 3)");

  // presets
  CLI::App* pre = app.add_subcommand("presets", "list built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    tp_config* cfg = nullptr;
    tp_status st;
    if (!preset.empty())
      st = tp_config_from_preset(preset.c_str(), &cfg);
    else if (!cfg_path.empty())
      st = tp_config_load(cfg_path.c_str(), &cfg);
    else {
      std::fprintf(stderr, "error: simulate needs --config or --preset\n");
      return 2;
    }
    if (st != TP_OK) return fail(st);
    tp_run_stats stats{};
    st = tp_simulate(cfg, out_dir.empty() ? nullptr : out_dir.c_str(), &stats);
    tp_config_free(cfg);
    if (st != TP_OK) return fail(st);
    std::printf("steps=%d sweeps=%d continuation=%d min_theta=%.6g mass_defect=%.3g "
                "min_energy_residual=%.3g wall=%.2fs\n",
                stats.steps, stats.total_sweeps, stats.continuation_steps, stats.min_theta,
                stats.max_mass_defect, stats.min_energy_residual, stats.wall_seconds);
    return 0;
  }

  if (chk->parsed()) {
    if (window != "steps" && window != "all") {
      std::fprintf(stderr, "error: --window must be 'steps' or 'all'\n");
      return 2;
    }
    tp_trajectory* traj = nullptr;
    tp_status st = tp_trajectory_open(traj_dir.c_str(), &traj);
    if (st != TP_OK) return fail(st);
    tp_check_summary sum{};
    st = tp_check(traj, window == "all" ? 1 : 0,
                  report_path.empty() ? nullptr : report_path.c_str(), &sum);
    tp_trajectory_free(traj);
    std::printf("checks=%d failed=%d worst=%s scaled_residual=%.3e\n", sum.checks_run,
                sum.checks_failed, sum.worst_kind, sum.worst_scaled_residual);
    if (st == TP_OK) return 0;
    if (st == TP_ERR_CHECK_FAILED) {
      std::fprintf(stderr, "error: %s\n", tp_last_error());
      return 1;
    }
    return fail(st);
  }

  if (conv->parsed()) {
    double sp = 0.0, tp = 0.0;
    const tp_status st = tp_convergence(conv_case.c_str(), levels, &sp, &tp);
    if (st != TP_OK) return fail(st);
    std::printf("case=%s spatial_order=%.3f temporal_order=%.3f\n", conv_case.c_str(), sp, tp);
    return 0;
  }

  if (pre->parsed()) {
    for (int i = 0; i < tp_preset_count(); ++i)
      std::printf("%-24s %s\n", tp_preset_name(i), tp_preset_brief(i));
    return 0;
  }
  return 2;
}
