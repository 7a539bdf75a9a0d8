#pragma once

#include <limits>
#include <vector>

#include "data.hpp"
#include "energy.hpp"
#include "grid.hpp"
#include "material.hpp"

namespace thermophase {

/// The quintuple (c, mu, z, theta, u) plus the backward velocity v = D_k(u).
struct State {
  int k = 0;
  Vec c, mu, z, theta;  // numNodes
  Vec u, v;             // numNodes * dim

  StateFields fields() const { return {&c, &mu, &z, &theta, &u, &v}; }
};

struct SolverParams {
  double sweep_tol = 1e-10;
  double newton_tol = 1e-12;
  int max_sweeps = 80;
  int max_newton = 50;
  double damping = 1.0;
  int pdas_max_iter = 60;
  bool allow_substepping = true;
  int max_substep_depth = 3;
};

struct ContinuationParams {
  enum class Mode { Off, Auto, On };
  Mode mode = Mode::Auto;
  double nu0 = 1e-2;
  double nu_factor = 1e-2;
  int stages = 3;
  double varrho = 6.0;
  double M0 = 1e3;
  double M_factor = 10.0;
};

struct SchemeParams {
  double T = 1.0;
  double tau = 0.02;
  double p = 3.0;
  double eps_p = 1e-8;
  double omega_reg = 0.1;  // mirrored into MaterialModel::reg by the runner
  // Active regularization of the current solve (0 / inf = plain scheme).
  double nu = 0.0;
  double varrho = 6.0;
  double M_trunc = std::numeric_limits<double>::infinity();
  bool p_override = false;  // permit p <= dim when set
  SolverParams solver;
  ContinuationParams continuation;

  bool regularized() const { return nu != 0.0 || std::isfinite(M_trunc); }
};

/// Per-step solver statistics and certified quantities.
struct StepReport {
  int k = 0;
  int sweeps = 0;
  int newton_ch = 0;
  int newton_temp = 0;
  int newton_mom = 0;
  int pdas_iters = 0;
  int active_upper = 0;
  int active_lower = 0;
  double res_ch = 0.0;
  double res_damage = 0.0;
  double res_mom = 0.0;
  double res_temp = 0.0;
  double combined_residual = 0.0;
  double theta_min = 0.0;
  double theta_max = 0.0;
  double mass_defect = 0.0;        // relative lumped-mass drift of c
  double complementarity_gap = 0.0;
  double energy_residual = 0.0;    // incremental inequality rhs - lhs
  double energy_scale = 1.0;
  double min_split_margin = 0.0;   // worst pointwise convex-split margin
  bool used_continuation = false;
  int substeps = 0;
  double tau_effective = 0.0;
};

/// Time-indexed sequence of states with their reports.
struct Trajectory {
  Mesh mesh;
  MaterialModel model;
  SchemeParams params;
  DataSampler data;
  std::vector<State> states;
  std::vector<StepReport> reports;
  Vec u_ghost;  // u^{-1} = u^0 - tau v^0

  int steps() const { return static_cast<int>(states.size()) - 1; }
  double timeAt(int k) const { return params.tau * k; }
};

/// (new - old) / tau, elementwise.
Vec dTau(const Vec& v_new, const Vec& v_old, double tau);

/// Validates the initial data and produces the k = 0 state plus the ghost
/// displacement u^{-1} = u^0 - tau v^0.
struct InitialData {
  Vec c0, z0, theta0;  // numNodes
  Vec u0, v0;          // numNodes * dim
};
std::pair<State, Vec> initStates(const Mesh& mesh, const MaterialModel& model,
                                 const SchemeParams& params, const DataSampler& data,
                                 const InitialData& init);

/// Heat-equation coefficient/source projections shared by the temperature
/// block and the trajectory monitors. All products are lumped so the implicit
/// temperature cancels nodewise in the entropy estimate.
struct HeatSourceTerms {
  Vec dc;    // D_k(c) nodal
  Vec dz;    // D_k(z) nodal
  Vec divP;  // lumped projection of div(D_k u)
  Vec visc;  // lumped projection of a_old eps(D_k u):V eps(D_k u)
  Vec mob;   // lumped projection of m_old |grad mu|^2
  Vec g;     // nodal local mean of g
};
HeatSourceTerms computeHeatSourceTerms(const Mesh& mesh, const MaterialModel& model,
                                       const Vec& a_qp, const Vec& m_qp, const State& prev,
                                       const Vec& c_new, const Vec& z_new, const Vec& u_new,
                                       const Vec& mu_new, const Vec& g_nodal, double tau);

/// Coefficients frozen at the previous time level, built once per step.
struct LaggedCoefficients {
  Vec m_qp;
  Vec a_qp;
  QpStrain eps_old;
  Vec lambda1_qp;  // c-splitting bound at (eps_old, z_old)
  Vec c_old_qp;
  Vec z_old_qp;
};
LaggedCoefficients freezeCoefficients(const Mesh& mesh, const MaterialModel& model,
                                      const State& prev);

/// One implicit step of the coupled scheme (plain when params.nu == 0 and
/// params.M_trunc == inf, the (nu,M)-regularized system otherwise).
std::pair<State, StepReport> step(const Mesh& mesh, const MaterialModel& model,
                                  const SchemeParams& params, const DataSampler& data,
                                  const State& prev, const Vec& u_prevprev, int k);

/// Same solve with the (nu, M) terms taken from `params` (callers set nu > 0,
/// finite M). With nu = 0 and M = inf this is identical to step().
std::pair<State, StepReport> regularizedStep(const Mesh& mesh, const MaterialModel& model,
                                             const SchemeParams& params, const DataSampler& data,
                                             const State& prev, const Vec& u_prevprev, int k);

/// Runs ceil(T / tau) steps from the given initial data.
Trajectory run(const Mesh& mesh, const MaterialModel& model, const SchemeParams& params,
               const DataSampler& data, const InitialData& init);

// Exposed for the block-level unit tests and the brute-force oracles.
struct BlockWorkspace;

struct CHBlockResult {
  Vec c, mu;
  int newton_iters = 0;
  double residual = 0.0;
};
CHBlockResult solveCHBlock(const Mesh& mesh, const MaterialModel& model,
                           const SchemeParams& params, const State& prev,
                           const LaggedCoefficients& lag, const Vec& theta_guess,
                           const Vec& c_init, const Vec& mu_init);

struct DamageBlockResult {
  Vec z, xi;
  int pdas_iters = 0;
  double residual = 0.0;
  double complementarity_gap = 0.0;
  int active_upper = 0;
  int active_lower = 0;
};
DamageBlockResult solveDamageBlock(const Mesh& mesh, const MaterialModel& model,
                                   const SchemeParams& params, const State& prev,
                                   const LaggedCoefficients& lag, const Vec& c_new,
                                   const Vec& theta_guess, const Vec& z_init);

struct MomentumBlockResult {
  Vec u, v;
  int newton_iters = 0;
  double residual = 0.0;
};
MomentumBlockResult solveMomentumBlock(const Mesh& mesh, const MaterialModel& model,
                                       const SchemeParams& params, const State& prev,
                                       const Vec& u_prevprev, const LaggedCoefficients& lag,
                                       const Vec& c_new, const Vec& z_new, const Vec& theta_guess,
                                       const Vec& f_nodal, const Vec& d_new);

struct TemperatureBlockResult {
  Vec theta;
  int newton_iters = 0;
  double residual = 0.0;
};
TemperatureBlockResult solveTemperatureBlock(const Mesh& mesh, const MaterialModel& model,
                                             const SchemeParams& params, const State& prev,
                                             const HeatSourceTerms& src, const Vec& hload,
                                             const Vec& theta_init);

}  // namespace thermophase
