#include "thermophase.h"

#include <cstdio>
#include <cstring>
#include <string>

#include "archive.hpp"
#include "config.hpp"
#include "error.hpp"
#include "runner.hpp"

using namespace thermophase;

struct tp_config_s {
  RunConfig cfg;
};

struct tp_trajectory_s {
  Trajectory traj;
};

namespace {

thread_local std::string g_last_error;

tp_status statusOf(const Error& e) {
  g_last_error = std::string(errorCodeName(e.code())) + ": " + e.what();
  switch (e.code()) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidInitialData:
      return TP_ERR_CONFIG;
    case ErrorCode::IoError:
      return TP_ERR_IO;
    case ErrorCode::StepDivergence:
    case ErrorCode::NewtonDivergence:
    case ErrorCode::ActiveSetCycling:
    case ErrorCode::LinearSolveFailure:
    case ErrorCode::PositivityLoss:
    case ErrorCode::ResolventDivergence:
      return TP_ERR_DIVERGED;
    case ErrorCode::BadArgument:
      return TP_ERR_ARGUMENT;
    default:
      return TP_ERR_INTERNAL;
  }
}

template <typename Fn>
tp_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return statusOf(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return TP_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* tp_version(void) { return "1.0.0"; }

const char* tp_last_error(void) { return g_last_error.c_str(); }

tp_status tp_config_parse(const char* text, tp_config** out) {
  if (!text || !out) {
    g_last_error = "tp_config_parse: null argument";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    *out = new tp_config_s{parseConfig(text)};
    g_last_error.clear();
    return TP_OK;
  });
}

tp_status tp_config_load(const char* path, tp_config** out) {
  if (!path || !out) {
    g_last_error = "tp_config_load: null argument";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    *out = new tp_config_s{parseConfig(readTextFile(path))};
    g_last_error.clear();
    return TP_OK;
  });
}

tp_status tp_config_from_preset(const char* name, tp_config** out) {
  if (!name || !out) {
    g_last_error = "tp_config_from_preset: null argument";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    *out = new tp_config_s{presetConfig(name)};
    g_last_error.clear();
    return TP_OK;
  });
}

tp_status tp_config_serialize(const tp_config* cfg, char* buf, size_t cap, size_t* written) {
  if (!cfg || (!buf && cap > 0)) {
    g_last_error = "tp_config_serialize: null argument";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    const std::string text = serializeConfig(cfg->cfg);
    if (written) *written = text.size() + 1;
    if (buf && cap > 0) {
      const size_t n = text.size() < cap - 1 ? text.size() : cap - 1;
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
      if (text.size() + 1 > cap) {
        g_last_error = "tp_config_serialize: buffer too small";
        return TP_ERR_ARGUMENT;
      }
    }
    g_last_error.clear();
    return TP_OK;
  });
}

void tp_config_free(tp_config* cfg) { delete cfg; }

int tp_preset_count(void) { return static_cast<int>(builtinPresets().size()); }

const char* tp_preset_name(int index) {
  const auto& ps = builtinPresets();
  if (index < 0 || index >= static_cast<int>(ps.size())) return nullptr;
  return ps[static_cast<std::size_t>(index)].name.c_str();
}

const char* tp_preset_brief(int index) {
  const auto& ps = builtinPresets();
  if (index < 0 || index >= static_cast<int>(ps.size())) return nullptr;
  return ps[static_cast<std::size_t>(index)].brief.c_str();
}

tp_status tp_simulate(const tp_config* cfg, const char* out_dir, tp_run_stats* stats) {
  if (!cfg) {
    g_last_error = "tp_simulate: null config";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    RunStats rs;
    simulate(cfg->cfg, out_dir ? out_dir : "", &rs);
    if (stats) {
      stats->steps = rs.steps;
      stats->total_sweeps = rs.total_sweeps;
      stats->continuation_steps = rs.continuation_steps;
      stats->min_theta = rs.min_theta;
      stats->max_mass_defect = rs.max_mass_defect;
      stats->min_energy_residual = rs.min_energy_residual;
      stats->wall_seconds = rs.wall_seconds;
    }
    g_last_error.clear();
    return TP_OK;
  });
}

tp_status tp_trajectory_open(const char* dir, tp_trajectory** out) {
  if (!dir || !out) {
    g_last_error = "tp_trajectory_open: null argument";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    LoadedArchive loaded = readArchive(dir);
    *out = new tp_trajectory_s{std::move(loaded.trajectory)};
    g_last_error.clear();
    return TP_OK;
  });
}

void tp_trajectory_free(tp_trajectory* traj) { delete traj; }

tp_status tp_check(const tp_trajectory* traj, int all_windows, const char* report_csv_path,
                   tp_check_summary* out) {
  if (!traj) {
    g_last_error = "tp_check: null trajectory";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    const CheckSummary summary = checkTrajectory(traj->traj, all_windows != 0, 1e-6);
    if (report_csv_path) writeTextFileAtomic(report_csv_path, reportsToCsv(summary.reports));
    if (out) {
      out->checks_run = summary.checks_run;
      out->checks_failed = summary.checks_failed;
      out->worst_scaled_residual = summary.worst_scaled_residual;
      std::snprintf(out->worst_kind, sizeof(out->worst_kind), "%s", summary.worst_kind.c_str());
    }
    if (summary.checks_failed > 0) {
      g_last_error = "trajectory monitors failed (" + std::to_string(summary.checks_failed) +
                     " of " + std::to_string(summary.checks_run) + ")";
      return TP_ERR_CHECK_FAILED;
    }
    g_last_error.clear();
    return TP_OK;
  });
}

tp_status tp_convergence(const char* case_name, int levels, double* spatial_order,
                         double* temporal_order) {
  if (!case_name) {
    g_last_error = "tp_convergence: null case name";
    return TP_ERR_ARGUMENT;
  }
  return guarded([&] {
    const ConvergenceResult res = convergenceStudy(case_name, levels);
    if (spatial_order) *spatial_order = res.spatial_order;
    if (temporal_order) *temporal_order = res.temporal_order;
    g_last_error.clear();
    return TP_OK;
  });
}

}  // extern "C"
