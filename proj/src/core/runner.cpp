#include "runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>

namespace thermophase {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

BuiltProblem buildProblem(const RunConfig& cfg) {
  BuiltProblem p{Mesh::uniform(cfg.dim, cfg.extents, cfg.cells), cfg.material, cfg.scheme,
                 DataSampler(cfg.f, cfg.g, cfg.h, cfg.uD), {}};
  const Mesh& mesh = p.mesh;
  const int N = mesh.numNodes();
  const int dim = mesh.dim();

  p.init.c0.assign(static_cast<std::size_t>(N), cfg.init_c);
  p.init.z0.assign(static_cast<std::size_t>(N), cfg.init_z);
  p.init.theta0.assign(static_cast<std::size_t>(N), cfg.init_theta);
  if (cfg.initial_preset == "cosine-perturbation" && cfg.init_perturb != 0.0) {
    for (int n = 0; n < N; ++n) {
      const auto x = mesh.nodeCoords(n);
      double bump = cfg.init_perturb;
      for (int i = 0; i < dim; ++i)
        bump *= std::cos(kPi * x[static_cast<std::size_t>(i)] /
                         mesh.extent()[static_cast<std::size_t>(i)]);
      p.init.c0[static_cast<std::size_t>(n)] += bump;
    }
  }
  p.init.u0 = p.data.uDNodal(mesh, 0.0);
  p.init.v0.assign(static_cast<std::size_t>(N * dim), 0.0);
  return p;
}

Trajectory simulate(const RunConfig& cfg, const std::string& out_dir, RunStats* stats) {
  const auto t0 = std::chrono::steady_clock::now();
  BuiltProblem prob = buildProblem(cfg);
  Trajectory traj = run(prob.mesh, prob.model, prob.params, prob.data, prob.init);

  std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
  if (const char* env = std::getenv("THERMOPHASE_OUT"); env && *env) dir = env;

  ArchiveWriter writer(dir, cfg, traj.mesh);
  for (const State& s : traj.states) writer.appendState(s);
  for (const StepReport& r : traj.reports) writer.appendReport(r);
  writer.finalize();

  if (cfg.monitors_on) {
    const CheckSummary summary = checkTrajectory(traj, false, cfg.monitor_tol);
    writeTextFileAtomic(dir + "/monitors.csv", reportsToCsv(summary.reports));
  }

  if (stats) {
    stats->steps = traj.steps();
    stats->total_sweeps = 0;
    stats->continuation_steps = 0;
    stats->min_theta = std::numeric_limits<double>::infinity();
    stats->max_mass_defect = 0.0;
    stats->min_energy_residual = std::numeric_limits<double>::infinity();
    for (const StepReport& r : traj.reports) {
      stats->total_sweeps += r.sweeps;
      stats->continuation_steps += r.used_continuation ? 1 : 0;
      stats->min_theta = std::min(stats->min_theta, r.theta_min);
      stats->max_mass_defect = std::max(stats->max_mass_defect, r.mass_defect);
      stats->min_energy_residual = std::min(stats->min_energy_residual, r.energy_residual);
    }
    if (traj.reports.empty()) {
      stats->min_theta = 0.0;
      stats->min_energy_residual = 0.0;
    }
    stats->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return traj;
}

CheckSummary checkTrajectory(const Trajectory& traj, bool all_windows, double tol) {
  CheckSummary out;
  TrajectoryAnalyzer an(traj, tol);
  const int K = an.steps();

  auto push = [&](InequalityReport rep) {
    out.checks_run += 1;
    if (!rep.pass) out.checks_failed += 1;
    const double scaled = rep.residual / rep.scale;
    if (out.reports.empty() || scaled < out.worst_scaled_residual) {
      out.worst_scaled_residual = scaled;
      out.worst_kind = rep.kind;
    }
    out.reports.push_back(std::move(rep));
  };

  auto sweepWindows = [&](auto&& evalWindow) {
    if (all_windows) {
      for (int s = 0; s <= K; ++s)
        for (int t = s; t <= K; ++t) evalWindow(s, t);
    } else {
      for (int k = 1; k <= K; ++k) evalWindow(k - 1, k);
      if (K > 1) evalWindow(0, K);
    }
  };

  // Total energy inequality over windows.
  sweepWindows([&](int s, int t) { push(an.totalEnergyWindow(s, t)); });

  // Entropy inequality for the canonical test family.
  for (const TestFieldPath& phi : canonicalEntropyTestFields(traj.mesh, K)) {
    const auto pre = an.entropyPrefix(phi);
    sweepWindows([&](int s, int t) { push(an.entropyWindowFromPrefix(pre, s, t)); });
  }

  // Damage inequalities: windows for the energy-dissipation form, every step
  // for the variational inequality.
  {
    const auto pre = an.damagePrefix();
    sweepWindows([&](int s, int t) { push(an.damageWindowFromPrefix(pre, s, t).first); });
    for (const InequalityReport& vi : pre.vi_steps) push(vi);
  }

  // Mass conservation per step.
  {
    const std::vector<double> defect = an.massDefect();
    InequalityReport rep;
    rep.kind = "mass-conservation";
    rep.s = 0;
    rep.t = K;
    double worst = 0.0;
    for (double d : defect) worst = std::max(worst, d);
    rep.lhs = worst;
    rep.rhs = 1e-10;
    rep.residual = rep.rhs - rep.lhs;
    rep.scale = 1.0;
    rep.tol = 0.0;
    rep.pass = worst <= 1e-10;
    push(rep);
  }

  // Pointwise constraints.
  {
    const auto pos = an.positivityReport();
    InequalityReport rep;
    rep.kind = "constraints";
    rep.s = 0;
    rep.t = K;
    rep.lhs = pos.global_min;
    rep.rhs = 0.0;
    rep.residual = pos.global_min;
    rep.scale = 1.0;
    rep.tol = 0.0;
    rep.pass =
        pos.all_positive && pos.z_in_range && pos.z_nonincreasing && pos.dirichlet_exact;
    rep.test_id = pos.all_positive
                      ? (pos.z_in_range ? (pos.z_nonincreasing
                                               ? (pos.dirichlet_exact ? "ok" : "dirichlet")
                                               : "z-monotonicity")
                                        : "z-range")
                      : "theta-positivity";
    push(rep);
  }

  // Convex-splitting margins and the per-step incremental energy inequality
  // certified by the stepper.
  for (const StepReport& r : traj.reports) {
    InequalityReport split;
    split.kind = "convex-splitting";
    split.s = r.k - 1;
    split.t = r.k;
    split.lhs = 0.0;
    split.rhs = r.min_split_margin;
    split.residual = r.min_split_margin;
    split.scale = 1.0;
    split.tol = 1e-10;
    split.pass = r.min_split_margin >= -1e-10;
    push(split);

    InequalityReport inc;
    inc.kind = "incremental-energy";
    inc.s = r.k - 1;
    inc.t = r.k;
    inc.lhs = 0.0;
    inc.rhs = r.energy_residual;
    inc.residual = r.energy_residual;
    inc.scale = r.energy_scale;
    inc.tol = 1e-8;
    inc.pass = r.energy_residual >= -1e-8 * r.energy_scale;
    push(inc);
  }

  return out;
}

namespace {

double lsSlope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double slopeOfErrors(const std::vector<double>& hs, const std::vector<double>& errs) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    lx.push_back(std::log(hs[i]));
    ly.push_back(std::log(std::max(errs[i], 1e-300)));
  }
  return lsSlope(lx, ly);
}

MaterialModel convergenceMaterial() {
  MaterialModel m;
  m.potential = ConcentrationPotential::doubleWell();
  m.elastic.lame_lambda = 1.0;
  m.elastic.lame_mu = 1.0;
  m.elastic.viscosity_factor = 1.0;
  m.elastic.eigenstrain_coeff = 0.0;
  m.damage = DamagePotential::linear(0.0);
  m.heat.c0 = 1.0;
  m.heat.kappa = 2.0;
  m.heat.rho = 1.0;
  return m;
}

double thetaStar(const std::array<double, 3>& x, double t) {
  return 1.0 + 0.5 * std::exp(-t) * std::cos(kPi * x[0]) * std::cos(kPi * x[1]);
}

double thetaStarSource(const std::array<double, 3>& x, double t) {
  // g = theta_t - c0 lap(theta) for c0 = 1
  const double s = std::exp(-t) * std::cos(kPi * x[0]) * std::cos(kPi * x[1]);
  return 0.5 * s * (2.0 * kPi * kPi - 1.0);
}

// One decoupled heat run with frozen mechanics; constant-K via M = 0.
Vec runHeat(const Mesh& mesh, double tau, double T) {
  MaterialModel model = convergenceMaterial();
  SchemeParams params;
  params.tau = tau;
  params.T = T;
  params.M_trunc = 0.0;  // K_M == c0
  const int N = mesh.numNodes();
  const int dim = mesh.dim();

  State prev;
  prev.c.assign(static_cast<std::size_t>(N), 0.0);
  prev.mu.assign(static_cast<std::size_t>(N), 0.0);
  prev.z.assign(static_cast<std::size_t>(N), 1.0);
  prev.u.assign(static_cast<std::size_t>(N * dim), 0.0);
  prev.v.assign(static_cast<std::size_t>(N * dim), 0.0);
  prev.theta.resize(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n)
    prev.theta[static_cast<std::size_t>(n)] = thetaStar(mesh.nodeCoords(n), 0.0);

  const Vec hload(static_cast<std::size_t>(N), 0.0);
  HeatSourceTerms src;
  src.dc.assign(static_cast<std::size_t>(N), 0.0);
  src.dz.assign(static_cast<std::size_t>(N), 0.0);
  src.divP.assign(static_cast<std::size_t>(N), 0.0);
  src.visc.assign(static_cast<std::size_t>(N), 0.0);
  src.mob.assign(static_cast<std::size_t>(N), 0.0);

  const int K = static_cast<int>(std::llround(T / tau));
  SpaceTimeField gfield = SpaceTimeField::customScalar(thetaStarSource);
  for (int k = 1; k <= K; ++k) {
    src.g.resize(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n)
      src.g[static_cast<std::size_t>(n)] =
          gfield.scalarMean(mesh.nodeCoords(n), (k - 1) * tau, k * tau);
    TemperatureBlockResult tb =
        solveTemperatureBlock(mesh, model, params, prev, src, hload, prev.theta);
    prev.theta = std::move(tb.theta);
  }
  return prev.theta;
}

void elasticityStar(const std::array<double, 3>& x, double lambda, double mu, double* u,
                    double* f) {
  const double A = 0.01;
  const double sx = std::sin(kPi * x[0]), cx = std::cos(kPi * x[0]);
  const double sy = std::sin(kPi * x[1]), cy = std::cos(kPi * x[1]);
  u[0] = A * sx * sy;
  u[1] = A * sx * sy;
  const double ss = sx * sy, cc = cx * cy;
  f[0] = A * kPi * kPi * ((lambda + mu) * (ss - cc) + 2.0 * mu * ss);
  f[1] = f[0];
}

Vec runElasticStatic(const Mesh& mesh) {
  MaterialModel model = convergenceMaterial();
  SchemeParams params;
  params.tau = 1e12;  // static limit
  const int N = mesh.numNodes();
  const int dim = mesh.dim();

  State prev;
  prev.c.assign(static_cast<std::size_t>(N), 0.0);
  prev.mu.assign(static_cast<std::size_t>(N), 0.0);
  prev.z.assign(static_cast<std::size_t>(N), 1.0);
  prev.theta.assign(static_cast<std::size_t>(N), 1e-300);
  prev.u.assign(static_cast<std::size_t>(N * dim), 0.0);
  prev.v.assign(static_cast<std::size_t>(N * dim), 0.0);

  const LaggedCoefficients lag = freezeCoefficients(mesh, model, prev);
  Vec f_nodal(static_cast<std::size_t>(N * dim), 0.0);
  Vec d_new(static_cast<std::size_t>(N * dim), 0.0);
  for (int n = 0; n < N; ++n) {
    double u[2], f[2];
    elasticityStar(mesh.nodeCoords(n), model.elastic.lame_lambda, model.elastic.lame_mu, u, f);
    for (int di = 0; di < dim; ++di)
      f_nodal[static_cast<std::size_t>(n * dim + di)] = f[di];
  }
  Vec theta0(static_cast<std::size_t>(N), 0.0);
  MomentumBlockResult mm = solveMomentumBlock(mesh, model, params, prev, prev.u, lag, prev.c,
                                              prev.z, theta0, f_nodal, d_new);
  return mm.u;
}

Vec runElasticDynamic(const Mesh& mesh, double tau, double T) {
  MaterialModel model = convergenceMaterial();
  model.elastic.viscosity_factor = 0.5;
  SchemeParams params;
  params.tau = tau;
  params.T = T;
  const int N = mesh.numNodes();
  const int dim = mesh.dim();

  State prev;
  prev.c.assign(static_cast<std::size_t>(N), 0.0);
  prev.mu.assign(static_cast<std::size_t>(N), 0.0);
  prev.z.assign(static_cast<std::size_t>(N), 1.0);
  prev.theta.assign(static_cast<std::size_t>(N), 1e-300);
  prev.u.assign(static_cast<std::size_t>(N * dim), 0.0);
  prev.v.assign(static_cast<std::size_t>(N * dim), 0.0);
  Vec u_pp = prev.u;
  Vec theta0(static_cast<std::size_t>(N), 0.0);
  Vec d_new(static_cast<std::size_t>(N * dim), 0.0);

  const LaggedCoefficients lag = freezeCoefficients(mesh, model, prev);
  const int K = static_cast<int>(std::llround(T / tau));
  for (int k = 1; k <= K; ++k) {
    Vec f_nodal(static_cast<std::size_t>(N * dim), 0.0);
    const double tm = 0.5 * ((k - 1) * tau + k * tau);
    for (int n = 0; n < N; ++n) {
      const auto x = mesh.nodeCoords(n);
      f_nodal[static_cast<std::size_t>(n * dim)] =
          0.5 * std::sin(2.0 * kPi * tm) * std::sin(kPi * x[0]) * std::sin(kPi * x[1]);
    }
    MomentumBlockResult mm = solveMomentumBlock(mesh, model, params, prev, u_pp, lag, prev.c,
                                                prev.z, theta0, f_nodal, d_new);
    u_pp = prev.u;
    prev.u = std::move(mm.u);
    prev.v = std::move(mm.v);
  }
  return prev.u;
}

double lumpedL2Error(const Mesh& mesh, const Vec& a, const Vec& b, int comps) {
  const Vec M = lumpedMass(mesh);
  double e = 0.0;
  for (int n = 0; n < mesh.numNodes(); ++n)
    for (int c = 0; c < comps; ++c) {
      const double d = a[static_cast<std::size_t>(n * comps + c)] -
                       b[static_cast<std::size_t>(n * comps + c)];
      e += M[static_cast<std::size_t>(n)] * d * d;
    }
  return std::sqrt(e);
}

}  // namespace

ConvergenceResult convergenceStudy(const std::string& which, int levels) {
  if (levels < 2) throw Error(ErrorCode::BadArgument, "convergence study needs >= 2 levels");
  ConvergenceResult out;

  if (which == "heat") {
    // Spatial: tau ~ h^2 so the first-order time error stays subordinate.
    std::vector<double> hs;
    const double T = 0.1;
    for (int l = 0; l < levels; ++l) {
      const int n = 8 << l;
      const Mesh mesh = Mesh::uniform(2, {1.0, 1.0, 1.0}, {n, n, 1});
      const double tau = 2e-3 / ((1 << l) * (1 << l));
      const Vec theta = runHeat(mesh, tau, T);
      Vec exact(static_cast<std::size_t>(mesh.numNodes()));
      for (int i = 0; i < mesh.numNodes(); ++i)
        exact[static_cast<std::size_t>(i)] = thetaStar(mesh.nodeCoords(i), T);
      out.spatial_errors.push_back(lumpedL2Error(mesh, theta, exact, 1));
      hs.push_back(1.0 / n);
    }
    out.spatial_order = slopeOfErrors(hs, out.spatial_errors);

    // Temporal: self-convergence against an over-resolved run on a fixed grid.
    const Mesh mesh = Mesh::uniform(2, {1.0, 1.0, 1.0}, {8, 8, 1});
    const double Tt = 0.25;
    const Vec ref = runHeat(mesh, Tt / 512.0, Tt);
    std::vector<double> taus;
    for (int l = 0; l < levels; ++l) {
      const double tau = Tt / (8 << l);
      const Vec theta = runHeat(mesh, tau, Tt);
      out.temporal_errors.push_back(lumpedL2Error(mesh, theta, ref, 1));
      taus.push_back(tau);
    }
    out.temporal_order = slopeOfErrors(taus, out.temporal_errors);
    return out;
  }

  if (which == "elasticity") {
    std::vector<double> hs;
    for (int l = 0; l < levels; ++l) {
      const int n = 8 << l;
      const Mesh mesh = Mesh::uniform(2, {1.0, 1.0, 1.0}, {n, n, 1});
      const Vec u = runElasticStatic(mesh);
      Vec exact(static_cast<std::size_t>(mesh.numNodes() * 2));
      for (int i = 0; i < mesh.numNodes(); ++i) {
        double ue[2], fe[2];
        elasticityStar(mesh.nodeCoords(i), 1.0, 1.0, ue, fe);
        exact[static_cast<std::size_t>(i * 2)] = ue[0];
        exact[static_cast<std::size_t>(i * 2 + 1)] = ue[1];
      }
      out.spatial_errors.push_back(lumpedL2Error(mesh, u, exact, 2));
      hs.push_back(1.0 / n);
    }
    out.spatial_order = slopeOfErrors(hs, out.spatial_errors);

    const Mesh mesh = Mesh::uniform(2, {1.0, 1.0, 1.0}, {8, 8, 1});
    const double Tt = 0.5;
    const Vec ref = runElasticDynamic(mesh, Tt / 512.0, Tt);
    std::vector<double> taus;
    for (int l = 0; l < levels; ++l) {
      const double tau = Tt / (8 << l);
      const Vec u = runElasticDynamic(mesh, tau, Tt);
      out.temporal_errors.push_back(lumpedL2Error(mesh, u, ref, 2));
      taus.push_back(tau);
    }
    out.temporal_order = slopeOfErrors(taus, out.temporal_errors);
    return out;
  }

  throw Error(ErrorCode::BadArgument, "convergence case must be 'heat' or 'elasticity'");
}

}  // namespace thermophase
