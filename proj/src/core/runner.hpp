#pragma once

#include <string>
#include <vector>

#include "archive.hpp"
#include "config.hpp"
#include "monitors.hpp"

namespace thermophase {

struct BuiltProblem {
  Mesh mesh;
  MaterialModel model;
  SchemeParams params;
  DataSampler data;
  InitialData init;
};

BuiltProblem buildProblem(const RunConfig& cfg);

struct RunStats {
  int steps = 0;
  int total_sweeps = 0;
  int continuation_steps = 0;
  double min_theta = 0.0;
  double max_mass_defect = 0.0;
  double min_energy_residual = 0.0;
  double wall_seconds = 0.0;
};

/// Runs the scheme and writes the archive to out_dir (overrides the config's
/// output directory; THERMOPHASE_OUT in the environment overrides both).
Trajectory simulate(const RunConfig& cfg, const std::string& out_dir, RunStats* stats);

struct CheckSummary {
  int checks_run = 0;
  int checks_failed = 0;
  double worst_scaled_residual = 0.0;  // min over checks of residual/scale
  std::string worst_kind;
  std::vector<InequalityReport> reports;
};

/// Runs every monitor on the trajectory. all_windows sweeps every grid pair
/// (s,t); otherwise per-step windows plus the full window are used.
CheckSummary checkTrajectory(const Trajectory& traj, bool all_windows, double tol);

struct ConvergenceResult {
  std::vector<double> spatial_errors;
  std::vector<double> temporal_errors;
  double spatial_order = 0.0;
  double temporal_order = 0.0;
};

/// Manufactured-solution study for the decoupled sub-physics.
/// which: "heat" (constant-K diffusion) or "elasticity" (eps* = 0).
ConvergenceResult convergenceStudy(const std::string& which, int levels);

}  // namespace thermophase
