#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stepper.hpp"

namespace thermophase {

/// Outcome of one inequality evaluation over a trajectory window.
/// pass <=> residual >= -tol * scale with scale = 1 + max(|lhs|, |rhs|).
struct InequalityReport {
  std::string kind;
  int s = 0;  // window start (step index)
  int t = 0;  // window end (step index)
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // rhs - lhs
  double scale = 1.0;
  std::string test_id;
  bool pass = true;
  double tol = 1e-6;
};

/// Nonnegative test-function path for the entropy inequality: nodal values at
/// each time index.
struct TestFieldPath {
  std::string name;
  std::function<Vec(int k)> at;
};

/// The canonical test family: the constant 1, four corner/center nodal hat
/// bumps, and one linearly time-varying blend (bump -> 1).
std::vector<TestFieldPath> canonicalEntropyTestFields(const Mesh& mesh, int steps);

/// Per-trajectory monitor evaluations with cached per-step quantities.
class TrajectoryAnalyzer {
 public:
  explicit TrajectoryAnalyzer(const Trajectory& traj, double tol = 1e-6);

  const Trajectory& trajectory() const { return *traj_; }
  int steps() const { return static_cast<int>(traj_->states.size()) - 1; }

  /// Maps a time to a grid index; throws WindowMisaligned off the grid.
  int indexOfTime(double t) const;

  EnergyBreakdown energyAt(int k) const;

  InequalityReport totalEnergyWindow(int ks, int kt) const;
  InequalityReport entropyWindow(int ks, int kt, const TestFieldPath& phi) const;
  /// Damage energy-dissipation inequality over the window plus the worst
  /// one-sided variational-inequality report over the window's steps.
  std::pair<InequalityReport, InequalityReport> damageWindow(int ks, int kt) const;

  /// Per-step cumulative quantities; windows evaluate in O(1) from these.
  struct EntropyPrefix {
    std::string name;
    std::vector<double> lhs_cum;  // cumulative incremental lhs terms
    std::vector<double> rhs_cum;  // cumulative incremental rhs terms (no boundary values)
    std::vector<double> B;        // boundary value sum_i M_i Lambda_i phi_i at each index
  };
  EntropyPrefix entropyPrefix(const TestFieldPath& phi) const;
  InequalityReport entropyWindowFromPrefix(const EntropyPrefix& pre, int ks, int kt) const;

  struct DamagePrefix {
    std::vector<double> diss_cum;   // cumulative tau ||D_k z||^2
    std::vector<double> drive_cum;  // cumulative drive work
    std::vector<double> z_energy;   // gradient + sigma energy at each index
    std::vector<InequalityReport> vi_steps;  // per-step worst VI
  };
  DamagePrefix damagePrefix() const;
  std::pair<InequalityReport, InequalityReport> damageWindowFromPrefix(const DamagePrefix& pre,
                                                                       int ks, int kt) const;

  /// Relative lumped-mass drift of c at every index (0 at k = 0).
  std::vector<double> massDefect() const;

  struct Positivity {
    std::vector<double> theta_min;  // per index
    double global_min = 0.0;
    bool all_positive = false;
    bool z_in_range = false;        // z in [0,1] everywhere
    bool z_nonincreasing = false;   // nodewise in k
    bool dirichlet_exact = false;   // boundary trace matches the datum
  };
  Positivity positivityReport() const;

  /// Worst pointwise convex-split margin over all accepted steps.
  double minSplitMarginOverTrajectory() const;

  /// Named norm diagnostics of the trajectory.
  std::vector<std::pair<std::string, double>> aprioriNorms(double alpha = 0.5) const;

  /// Diagnostic: boundary stress power via one-sided gradient recovery,
  /// summed over the window (not used in the certified inequality).
  double recoveredBoundaryPower(int ks, int kt) const;

 private:
  struct StepTerms {
    double ext_power = 0.0;   // tau (int g + bdry h + int f.v)
    double compensation = 0.0;  // Dirichlet compensation terms
    double recovered_power = 0.0;
  };
  struct EntropyTerms {
    double A = 0.0;  // sum_i M_i Lambda^{k-1} (phi^k - phi^{k-1})
    double V = 0.0;  // rho tau sum_i M_i divP phi
    double D = 0.0;  // tau int K grad(theta) . grad I_h(phi/theta)
    double P = 0.0;  // tau int K |grad log theta|^2 phi
    double Q = 0.0;  // tau sum_i M_i S_i phi_i / theta_i
    double H = 0.0;  // tau bdry int h phi/theta
  };

  void ensureStepTerms() const;
  EntropyTerms entropyTermsFor(int k, const Vec& phi_new, const Vec& phi_old) const;
  double entropyBoundaryValue(int k, const Vec& phi) const;
  HeatSourceTerms sourcesFor(int k) const;

  const Trajectory* traj_;
  double tol_;
  Vec lumped_mass_;
  mutable std::vector<double> energies_;
  mutable std::vector<StepTerms> terms_;
  mutable bool terms_ready_ = false;
};

// Spec-level convenience wrappers.
InequalityReport checkTotalEnergyInequality(const Trajectory& traj, double s, double t);
InequalityReport checkEntropyInequality(const Trajectory& traj, double s, double t,
                                        const TestFieldPath& phi);
std::pair<InequalityReport, InequalityReport> checkDamageInequalities(const Trajectory& traj,
                                                                      double s, double t);

/// Closed-form comparison floor theta_* / (1 + C T theta_*).
double thetaFloor(double theta_star, double C, double T);

/// Exhaustive tensor-grid search with refinement passes for incremental
/// functionals of at most 6 unknowns.
struct OracleProblem {
  std::function<double(const Vec&)> objective;
  Vec lower, upper;
  std::vector<bool> bound_is_constraint;  // per unknown: box edge is a real bound
};
Vec bruteForceMinimize(const OracleProblem& prob, int points_per_axis, int passes);

/// Incremental objective whose stationarity system is the CH block; the mass
/// constraint is eliminated through the last node. Returns the objective over
/// the full nodal vector.
std::function<double(const Vec&)> chIncrementalObjective(const Mesh& mesh,
                                                         const MaterialModel& model,
                                                         const SchemeParams& params,
                                                         const State& prev,
                                                         const Vec& theta_guess);

/// Incremental objective of the damage block (box [0, z_old] handled by the
/// oracle bounds).
std::function<double(const Vec&)> damageIncrementalObjective(const Mesh& mesh,
                                                             const MaterialModel& model,
                                                             const SchemeParams& params,
                                                             const State& prev, const Vec& c_new,
                                                             const Vec& theta_guess);

/// Serialize reports as CSV (kind,s,t,lhs,rhs,residual,scale,test,pass).
std::string reportsToCsv(const std::vector<InequalityReport>& reports);

}  // namespace thermophase
