#include "monitors.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace thermophase {

namespace {

constexpr double kLogFloor = 1e-14;

double safeLog(double theta, bool& floored) {
  if (theta < kLogFloor) {
    floored = true;
    return std::log(kLogFloor);
  }
  return std::log(theta);
}

int nearestNode(const Mesh& mesh, std::array<double, 3> target) {
  int best = 0;
  double bestd = std::numeric_limits<double>::infinity();
  for (int n = 0; n < mesh.numNodes(); ++n) {
    const auto x = mesh.nodeCoords(n);
    double d = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double dd = x[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)];
      d += dd * dd;
    }
    if (d < bestd) {
      bestd = d;
      best = n;
    }
  }
  return best;
}

Vec hatField(const Mesh& mesh, int node) {
  Vec phi(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  phi[static_cast<std::size_t>(node)] = 1.0;
  return phi;
}

}  // namespace

std::vector<TestFieldPath> canonicalEntropyTestFields(const Mesh& mesh, int steps) {
  std::vector<TestFieldPath> fields;
  const int N = mesh.numNodes();

  fields.push_back({"constant-1", [N](int) { return Vec(static_cast<std::size_t>(N), 1.0); }});

  const auto ext = mesh.extent();
  const std::array<std::array<double, 3>, 4> spots = {{{0.0, 0.0, 0.0},
                                                       {ext[0], 0.0, 0.0},
                                                       {ext[0], ext[1], 0.0},
                                                       {0.5 * ext[0], 0.5 * ext[1], 0.0}}};
  const char* names[4] = {"bump-corner-origin", "bump-corner-x", "bump-corner-far",
                          "bump-center"};
  for (int s = 0; s < 4; ++s) {
    const Vec phi = hatField(mesh, nearestNode(mesh, spots[static_cast<std::size_t>(s)]));
    fields.push_back({names[s], [phi](int) { return phi; }});
  }

  // Linearly time-varying blend bump -> 1, nonnegative throughout.
  const Vec bump = hatField(mesh, nearestNode(mesh, {0.5 * ext[0], 0.5 * ext[1], 0.0}));
  const int K = std::max(steps, 1);
  fields.push_back({"time-varying", [bump, N, K](int k) {
                      const double a = static_cast<double>(k) / K;
                      Vec phi(static_cast<std::size_t>(N));
                      for (int i = 0; i < N; ++i)
                        phi[static_cast<std::size_t>(i)] =
                            (1.0 - a) * bump[static_cast<std::size_t>(i)] + a;
                      return phi;
                    }});
  return fields;
}

TrajectoryAnalyzer::TrajectoryAnalyzer(const Trajectory& traj, double tol)
    : traj_(&traj), tol_(tol), lumped_mass_(lumpedMass(traj.mesh)) {}

int TrajectoryAnalyzer::indexOfTime(double t) const {
  const double tau = traj_->params.tau;
  const double kf = t / tau;
  const int k = static_cast<int>(std::llround(kf));
  if (k < 0 || k > steps() || std::fabs(kf - k) > 1e-9)
    throw Error(ErrorCode::WindowMisaligned, "window endpoints must sit on the time grid");
  return k;
}

EnergyBreakdown TrajectoryAnalyzer::energyAt(int k) const {
  const State& s = traj_->states[static_cast<std::size_t>(k)];
  return totalEnergy(traj_->mesh, traj_->model, traj_->params.p, traj_->params.eps_p, s.fields());
}

HeatSourceTerms TrajectoryAnalyzer::sourcesFor(int k) const {
  const Mesh& mesh = traj_->mesh;
  const State& prev = traj_->states[static_cast<std::size_t>(k - 1)];
  const State& next = traj_->states[static_cast<std::size_t>(k)];
  const double tau = traj_->params.tau;
  const LaggedCoefficients lag = freezeCoefficients(mesh, traj_->model, prev);
  Vec g_nodal(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  if (!traj_->data.g().isZero())
    for (int n = 0; n < mesh.numNodes(); ++n)
      g_nodal[static_cast<std::size_t>(n)] =
          traj_->data.g().scalarMean(mesh.nodeCoords(n), (k - 1) * tau, k * tau);
  return computeHeatSourceTerms(mesh, traj_->model, lag.a_qp, lag.m_qp, prev, next.c, next.z,
                                next.u, next.mu, g_nodal, tau);
}

void TrajectoryAnalyzer::ensureStepTerms() const {
  if (terms_ready_) return;
  const Mesh& mesh = traj_->mesh;
  const MaterialModel& model = traj_->model;
  const SchemeParams& params = traj_->params;
  const double tau = params.tau;
  const int K = steps();

  energies_.resize(static_cast<std::size_t>(K + 1));
  for (int k = 0; k <= K; ++k) energies_[static_cast<std::size_t>(k)] = energyAt(k).total;

  terms_.assign(static_cast<std::size_t>(K + 1), {});
  for (int k = 1; k <= K; ++k) {
    const State& prev = traj_->states[static_cast<std::size_t>(k - 1)];
    const State& next = traj_->states[static_cast<std::size_t>(k)];
    const double t0 = (k - 1) * tau, t1 = k * tau;

    Vec g_nodal(static_cast<std::size_t>(mesh.numNodes()), 0.0);
    Vec h_nodal(static_cast<std::size_t>(mesh.numNodes()), 0.0);
    Vec f_nodal(static_cast<std::size_t>(mesh.numNodes() * mesh.dim()), 0.0);
    if (!traj_->data.g().isZero())
      for (int n = 0; n < mesh.numNodes(); ++n)
        g_nodal[static_cast<std::size_t>(n)] = traj_->data.g().scalarMean(mesh.nodeCoords(n), t0, t1);
    if (!traj_->data.h().isZero())
      for (int n : mesh.boundaryNodes())
        h_nodal[static_cast<std::size_t>(n)] = traj_->data.h().scalarMean(mesh.nodeCoords(n), t0, t1);
    if (!traj_->data.f().isZero())
      for (int n = 0; n < mesh.numNodes(); ++n) {
        const auto fv = traj_->data.f().vectorMean(mesh.nodeCoords(n), t0, t1);
        for (int d = 0; d < mesh.dim(); ++d)
          f_nodal[static_cast<std::size_t>(n * mesh.dim() + d)] = fv[static_cast<std::size_t>(d)];
      }
    const Vec hload = boundaryFluxLoad(mesh, h_nodal);
    const Vec d_new = traj_->data.uDNodal(mesh, t1);
    const Vec d_old = traj_->data.uDNodal(mesh, t0);
    const LaggedCoefficients lag = freezeCoefficients(mesh, model, prev);

    StepTerms st;
    st.ext_power = stepExternalPower(mesh, tau, g_nodal, hload, f_nodal, next.v);
    st.compensation =
        stepBoundaryCompensation(mesh, model, tau, lag.a_qp, next.c, next.z, next.u, next.v,
                                 prev.v, next.theta, f_nodal, d_new, d_old);
    Vec d_rate(d_new.size());
    for (std::size_t i = 0; i < d_new.size(); ++i) d_rate[i] = (d_new[i] - d_old[i]) / tau;
    st.recovered_power =
        tau * boundaryStressPowerRecovered(mesh, next.u, prev.u, next.c, next.z, prev.c, prev.z,
                                           next.theta, d_rate, tau, model);
    terms_[static_cast<std::size_t>(k)] = st;
  }
  terms_ready_ = true;
}

InequalityReport TrajectoryAnalyzer::totalEnergyWindow(int ks, int kt) const {
  ensureStepTerms();
  InequalityReport rep;
  rep.kind = "total-energy";
  rep.s = ks;
  rep.t = kt;
  rep.lhs = energies_[static_cast<std::size_t>(kt)];
  double rhs = energies_[static_cast<std::size_t>(ks)];
  for (int k = ks + 1; k <= kt; ++k) {
    rhs += terms_[static_cast<std::size_t>(k)].ext_power +
           terms_[static_cast<std::size_t>(k)].compensation;
  }
  rep.rhs = rhs;
  rep.residual = rep.rhs - rep.lhs;
  rep.scale = 1.0 + std::max(std::fabs(rep.lhs), std::fabs(rep.rhs));
  rep.tol = tol_;
  rep.pass = rep.residual >= -tol_ * rep.scale;
  return rep;
}

double TrajectoryAnalyzer::recoveredBoundaryPower(int ks, int kt) const {
  ensureStepTerms();
  double s = 0.0;
  for (int k = ks + 1; k <= kt; ++k) s += terms_[static_cast<std::size_t>(k)].recovered_power;
  return s;
}

double TrajectoryAnalyzer::entropyBoundaryValue(int k, const Vec& phi) const {
  const State& s = traj_->states[static_cast<std::size_t>(k)];
  bool floored = false;
  double val = 0.0;
  for (int i = 0; i < traj_->mesh.numNodes(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const double lam = safeLog(s.theta[si], floored) + s.c[si] + s.z[si];
    val += lumped_mass_[si] * lam * phi[si];
  }
  if (floored)
    throw Error(ErrorCode::NonpositiveTemperature, "log floor activated in the entropy monitor");
  return val;
}

TrajectoryAnalyzer::EntropyTerms TrajectoryAnalyzer::entropyTermsFor(int k, const Vec& phi_new,
                                                                     const Vec& phi_old) const {
  const Mesh& mesh = traj_->mesh;
  const State& prev = traj_->states[static_cast<std::size_t>(k - 1)];
  const State& next = traj_->states[static_cast<std::size_t>(k)];
  const double tau = traj_->params.tau;
  const double rho = traj_->model.heat.rho;
  const int N = mesh.numNodes();

  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (phi_new[si] < 0.0 || phi_old[si] < 0.0)
      throw Error(ErrorCode::NegativeTestFunction, "entropy test functions must be nonnegative");
    if (!(next.theta[si] > 0.0) || !(prev.theta[si] > 0.0))
      throw Error(ErrorCode::NonpositiveTemperature, "entropy monitor requires theta > 0");
  }

  const HeatSourceTerms src = sourcesFor(k);
  Vec h_nodal(static_cast<std::size_t>(N), 0.0);
  if (!traj_->data.h().isZero())
    for (int n : mesh.boundaryNodes())
      h_nodal[static_cast<std::size_t>(n)] =
          traj_->data.h().scalarMean(mesh.nodeCoords(n), (k - 1) * tau, k * tau);
  const Vec hload = boundaryFluxLoad(mesh, h_nodal);

  EntropyTerms et;
  bool floored = false;
  Vec w(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const double lam_old = safeLog(prev.theta[si], floored) + prev.c[si] + prev.z[si];
    et.A += lumped_mass_[si] * lam_old * (phi_new[si] - phi_old[si]);
    et.V += rho * tau * lumped_mass_[si] * src.divP[si] * phi_new[si];
    w[si] = phi_new[si] / next.theta[si];
    const double S = src.g[si] + src.dc[si] * src.dc[si] + src.dz[si] * src.dz[si] +
                     src.visc[si] + src.mob[si];
    et.Q += tau * lumped_mass_[si] * S * w[si];
    et.H += tau * hload[si] * w[si];
  }
  if (floored)
    throw Error(ErrorCode::NonpositiveTemperature, "log floor activated in the entropy monitor");

  // Diffusion terms: K grad(theta).grad(I_h(phi/theta)) and the entropy
  // production K |grad log theta|^2 phi, both on the cell quadrature.
  const QpScalar tq = evaluateAtQuadPoints(mesh, next.theta);
  const QpScalar wq = evaluateAtQuadPoints(mesh, w);
  const QpScalar pq = evaluateAtQuadPoints(mesh, phi_new);
  const int nqp = mesh.quadPointsPerCell();
  for (int c = 0; c < mesh.numCells(); ++c)
    for (int q = 0; q < nqp; ++q) {
      const std::size_t kk = static_cast<std::size_t>(c * nqp + q);
      const double kv = evalK(tq.value[kk], traj_->model.heat);
      double gg = 0.0, g2 = 0.0;
      for (int i = 0; i < mesh.dim(); ++i) {
        gg += tq.grad[kk][static_cast<std::size_t>(i)] * wq.grad[kk][static_cast<std::size_t>(i)];
        g2 += tq.grad[kk][static_cast<std::size_t>(i)] * tq.grad[kk][static_cast<std::size_t>(i)];
      }
      et.D += tau * mesh.quadWeight() * kv * gg;
      et.P += tau * mesh.quadWeight() * kv * g2 * pq.value[kk] / (tq.value[kk] * tq.value[kk]);
    }
  return et;
}

TrajectoryAnalyzer::EntropyPrefix TrajectoryAnalyzer::entropyPrefix(
    const TestFieldPath& phi) const {
  const int K = steps();
  EntropyPrefix pre;
  pre.name = phi.name;
  pre.lhs_cum.assign(static_cast<std::size_t>(K + 1), 0.0);
  pre.rhs_cum.assign(static_cast<std::size_t>(K + 1), 0.0);
  pre.B.assign(static_cast<std::size_t>(K + 1), 0.0);
  Vec phi_old = phi.at(0);
  pre.B[0] = entropyBoundaryValue(0, phi_old);
  for (int k = 1; k <= K; ++k) {
    const Vec phi_new = phi.at(k);
    const EntropyTerms et = entropyTermsFor(k, phi_new, phi_old);
    pre.lhs_cum[static_cast<std::size_t>(k)] =
        pre.lhs_cum[static_cast<std::size_t>(k - 1)] + et.A - et.V - (et.D + et.P);
    pre.rhs_cum[static_cast<std::size_t>(k)] =
        pre.rhs_cum[static_cast<std::size_t>(k - 1)] - (et.P + et.Q + et.H);
    pre.B[static_cast<std::size_t>(k)] = entropyBoundaryValue(k, phi_new);
    phi_old = phi_new;
  }
  return pre;
}

InequalityReport TrajectoryAnalyzer::entropyWindowFromPrefix(const EntropyPrefix& pre, int ks,
                                                             int kt) const {
  InequalityReport rep;
  rep.kind = "entropy";
  rep.s = ks;
  rep.t = kt;
  rep.test_id = pre.name;
  rep.lhs = pre.lhs_cum[static_cast<std::size_t>(kt)] - pre.lhs_cum[static_cast<std::size_t>(ks)];
  rep.rhs = pre.rhs_cum[static_cast<std::size_t>(kt)] - pre.rhs_cum[static_cast<std::size_t>(ks)] +
            pre.B[static_cast<std::size_t>(kt)] - pre.B[static_cast<std::size_t>(ks)];
  rep.residual = rep.rhs - rep.lhs;
  rep.scale = 1.0 + std::max(std::fabs(rep.lhs), std::fabs(rep.rhs));
  rep.tol = tol_;
  rep.pass = rep.residual >= -tol_ * rep.scale;
  return rep;
}

InequalityReport TrajectoryAnalyzer::entropyWindow(int ks, int kt, const TestFieldPath& phi) const {
  return entropyWindowFromPrefix(entropyPrefix(phi), ks, kt);
}

namespace {

// z-drive of step k at the quadrature points (lagged strain, new c).
struct DamageDriveQp {
  Vec drive;       // W^omega_z(c^k, eps_old, z^k) + lambda3 (z^k - z^{k-1})
};

DamageDriveQp damageDriveAt(const Mesh& mesh, const MaterialModel& model, const State& prev,
                            const State& next) {
  const PreparedElastic prep(model.elastic);
  const QpStrain eps_old = strainAtQuadPoints(mesh, prev.u);
  const QpScalar cq = evaluateAtQuadPoints(mesh, next.c);
  const QpScalar zq = evaluateAtQuadPoints(mesh, next.z);
  const QpScalar zq_old = evaluateAtQuadPoints(mesh, prev.z);
  DamageDriveQp out;
  out.drive.resize(cq.value.size());
  for (std::size_t k = 0; k < cq.value.size(); ++k) {
    const WDerivatives wd =
        evalWOmegaDerivativesP(cq.value[k], eps_old.strain[k], zq.value[k], prep, model.reg);
    const double lam3 = splittingBoundZP(cq.value[k], eps_old.strain[k], prep, model.reg);
    out.drive[k] = wd.Wz + lam3 * (zq.value[k] - zq_old.value[k]);
  }
  return out;
}

}  // namespace

TrajectoryAnalyzer::DamagePrefix TrajectoryAnalyzer::damagePrefix() const {
  const Mesh& mesh = traj_->mesh;
  const MaterialModel& model = traj_->model;
  const SchemeParams& params = traj_->params;
  const double tau = params.tau;
  const int N = mesh.numNodes();
  const int K = steps();

  auto zEnergy = [&](int k) {
    const State& s = traj_->states[static_cast<std::size_t>(k)];
    double e = pGradientEnergy(mesh, s.z, params.p, params.eps_p);
    for (int i = 0; i < N; ++i)
      e += lumped_mass_[static_cast<std::size_t>(i)] *
           model.damage.value(s.z[static_cast<std::size_t>(i)]);
    return e;
  };

  DamagePrefix pre;
  pre.diss_cum.assign(static_cast<std::size_t>(K + 1), 0.0);
  pre.drive_cum.assign(static_cast<std::size_t>(K + 1), 0.0);
  pre.z_energy.assign(static_cast<std::size_t>(K + 1), 0.0);
  for (int k = 0; k <= K; ++k) pre.z_energy[static_cast<std::size_t>(k)] = zEnergy(k);

  for (int k = 1; k <= K; ++k) {
    double dissipation = 0.0;
    double drive_work = 0.0;
    double vi_worst = std::numeric_limits<double>::infinity();
    std::string vi_worst_id = "none";
    const State& prev = traj_->states[static_cast<std::size_t>(k - 1)];
    const State& next = traj_->states[static_cast<std::size_t>(k)];
    const DamageDriveQp dq = damageDriveAt(mesh, model, prev, next);
    const QpScalar dz_qp = [&] {
      Vec dz(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        dz[si] = (next.z[si] - prev.z[si]) / tau;
      }
      return evaluateAtQuadPoints(mesh, dz);
    }();

    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const double dzi = (next.z[si] - prev.z[si]) / tau;
      dissipation += tau * lumped_mass_[si] * dzi * dzi;
      drive_work += tau * lumped_mass_[si] * next.theta[si] * dzi;
    }
    for (std::size_t kk = 0; kk < dq.drive.size(); ++kk)
      drive_work -= tau * mesh.quadWeight() * dq.drive[kk] * dz_qp.value[kk];

    // One-sided variational inequality with the canonical feasible tests.
    struct TestSpec {
      std::string id;
      Vec zeta;
    };
    std::vector<TestSpec> tests;
    tests.push_back({"zero", Vec(static_cast<std::size_t>(N), 0.0)});
    tests.push_back({"z-old", prev.z});
    Vec half(prev.z);
    for (double& v : half) v *= 0.5;
    tests.push_back({"half-z-old", std::move(half)});
    tests.push_back({"z-new", next.z});
    Vec pinch = next.z;
    int imax = 0;
    for (int i = 1; i < N; ++i)
      if (next.z[static_cast<std::size_t>(i)] > next.z[static_cast<std::size_t>(imax)]) imax = i;
    pinch[static_cast<std::size_t>(imax)] *= 0.5;
    tests.push_back({"nodal-pinch", std::move(pinch)});

    const QpScalar zq = evaluateAtQuadPoints(mesh, next.z);
    for (const TestSpec& ts : tests) {
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        if (ts.zeta[si] < -1e-14 || ts.zeta[si] > prev.z[si] + 1e-14)
          throw Error(ErrorCode::InadmissibleTestField,
                      "damage test field must satisfy 0 <= zeta <= z_old");
      }
      double value = 0.0;
      // gradient part int |grad z|^{p-2} grad z . grad(zeta - z)
      Vec diff(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        diff[si] = ts.zeta[si] - next.z[si];
      }
      const QpScalar diffq = evaluateAtQuadPoints(mesh, diff);
      const int nqp = mesh.quadPointsPerCell();
      for (int c = 0; c < mesh.numCells(); ++c)
        for (int q = 0; q < nqp; ++q) {
          const std::size_t kk = static_cast<std::size_t>(c * nqp + q);
          double g2 = params.eps_p * params.eps_p, gd = 0.0;
          for (int i = 0; i < mesh.dim(); ++i) {
            g2 += zq.grad[kk][static_cast<std::size_t>(i)] *
                  zq.grad[kk][static_cast<std::size_t>(i)];
            gd += zq.grad[kk][static_cast<std::size_t>(i)] *
                  diffq.grad[kk][static_cast<std::size_t>(i)];
          }
          value += mesh.quadWeight() *
                   (std::pow(g2, 0.5 * (params.p - 2.0)) * gd + dq.drive[kk] * diffq.value[kk]);
        }
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const double dzi = (next.z[si] - prev.z[si]) / tau;
        value += lumped_mass_[si] *
                 (dzi + model.damage.convPrime(next.z[si]) + model.damage.concPrime(prev.z[si]) -
                  next.theta[si]) *
                 diff[si];
      }
      if (value < vi_worst) {
        vi_worst = value;
        vi_worst_id = ts.id + "@k=" + std::to_string(k);
      }
    }

    pre.diss_cum[static_cast<std::size_t>(k)] =
        pre.diss_cum[static_cast<std::size_t>(k - 1)] + dissipation;
    pre.drive_cum[static_cast<std::size_t>(k)] =
        pre.drive_cum[static_cast<std::size_t>(k - 1)] + drive_work;

    InequalityReport vi;
    vi.kind = "damage-variational-inequality";
    vi.s = k - 1;
    vi.t = k;
    vi.lhs = 0.0;
    vi.rhs = vi_worst;
    vi.residual = vi.rhs - vi.lhs;
    vi.scale = 1.0 + std::fabs(vi.rhs);
    vi.test_id = vi_worst_id;
    vi.tol = tol_;
    vi.pass = vi.residual >= -tol_ * vi.scale;
    pre.vi_steps.push_back(vi);
  }
  return pre;
}

std::pair<InequalityReport, InequalityReport> TrajectoryAnalyzer::damageWindowFromPrefix(
    const DamagePrefix& pre, int ks, int kt) const {
  InequalityReport ed;
  ed.kind = "damage-energy-dissipation";
  ed.s = ks;
  ed.t = kt;
  const double dissipation =
      pre.diss_cum[static_cast<std::size_t>(kt)] - pre.diss_cum[static_cast<std::size_t>(ks)];
  const double drive_work =
      pre.drive_cum[static_cast<std::size_t>(kt)] - pre.drive_cum[static_cast<std::size_t>(ks)];
  ed.lhs = dissipation + pre.z_energy[static_cast<std::size_t>(kt)];
  ed.rhs = pre.z_energy[static_cast<std::size_t>(ks)] + drive_work;
  ed.residual = ed.rhs - ed.lhs;
  ed.scale = 1.0 + std::max(std::fabs(ed.lhs), std::fabs(ed.rhs));
  ed.tol = tol_;
  ed.pass = ed.residual >= -tol_ * ed.scale;

  InequalityReport vi;
  vi.kind = "damage-variational-inequality";
  vi.s = ks;
  vi.t = kt;
  vi.lhs = 0.0;
  double worst = std::numeric_limits<double>::infinity();
  std::string worst_id = "none";
  for (int k = ks + 1; k <= kt; ++k) {
    const InequalityReport& r = pre.vi_steps[static_cast<std::size_t>(k - 1)];
    if (r.rhs < worst) {
      worst = r.rhs;
      worst_id = r.test_id;
    }
  }
  vi.rhs = (kt > ks) ? worst : 0.0;
  vi.residual = vi.rhs - vi.lhs;
  vi.scale = 1.0 + std::fabs(vi.rhs);
  vi.test_id = worst_id;
  vi.tol = tol_;
  vi.pass = vi.residual >= -tol_ * vi.scale;
  return {ed, vi};
}

std::pair<InequalityReport, InequalityReport> TrajectoryAnalyzer::damageWindow(int ks,
                                                                               int kt) const {
  return damageWindowFromPrefix(damagePrefix(), ks, kt);
}

std::vector<double> TrajectoryAnalyzer::massDefect() const {
  const int N = traj_->mesh.numNodes();
  std::vector<double> out;
  double mass0 = 0.0;
  for (int i = 0; i < N; ++i)
    mass0 += lumped_mass_[static_cast<std::size_t>(i)] *
             traj_->states[0].c[static_cast<std::size_t>(i)];
  for (const State& s : traj_->states) {
    double m = 0.0;
    for (int i = 0; i < N; ++i)
      m += lumped_mass_[static_cast<std::size_t>(i)] * s.c[static_cast<std::size_t>(i)];
    out.push_back(std::fabs(m - mass0) / (1.0 + std::fabs(mass0)));
  }
  return out;
}

TrajectoryAnalyzer::Positivity TrajectoryAnalyzer::positivityReport() const {
  Positivity rep;
  const Mesh& mesh = traj_->mesh;
  const int N = mesh.numNodes();
  const int dim = mesh.dim();
  rep.global_min = std::numeric_limits<double>::infinity();
  rep.all_positive = true;
  rep.z_in_range = true;
  rep.z_nonincreasing = true;
  rep.dirichlet_exact = true;
  for (std::size_t k = 0; k < traj_->states.size(); ++k) {
    const State& s = traj_->states[k];
    double tmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      tmin = std::min(tmin, s.theta[si]);
      if (s.z[si] < 0.0 || s.z[si] > 1.0) rep.z_in_range = false;
      if (k > 0 && s.z[si] > traj_->states[k - 1].z[si]) rep.z_nonincreasing = false;
    }
    rep.theta_min.push_back(tmin);
    rep.global_min = std::min(rep.global_min, tmin);
    if (!(tmin > 0.0)) rep.all_positive = false;

    const Vec d = traj_->data.uDNodal(mesh, traj_->params.tau * static_cast<double>(k));
    for (int n : mesh.boundaryNodes())
      for (int c = 0; c < dim; ++c) {
        const std::size_t idx = static_cast<std::size_t>(n * dim + c);
        if (s.u[idx] != d[idx]) rep.dirichlet_exact = false;
      }
  }
  return rep;
}

double TrajectoryAnalyzer::minSplitMarginOverTrajectory() const {
  double m = std::numeric_limits<double>::infinity();
  for (const StepReport& r : traj_->reports) m = std::min(m, r.min_split_margin);
  return m;
}

std::vector<std::pair<std::string, double>> TrajectoryAnalyzer::aprioriNorms(double alpha) const {
  const Mesh& mesh = traj_->mesh;
  const MaterialModel& model = traj_->model;
  const SchemeParams& params = traj_->params;
  const double tau = params.tau;
  const int N = mesh.numNodes();
  const int K = steps();

  auto lumpedLp = [&](const Vec& v, double p) {
    double s = 0.0;
    for (int i = 0; i < N; ++i)
      s += lumped_mass_[static_cast<std::size_t>(i)] *
           std::pow(std::fabs(v[static_cast<std::size_t>(i)]), p);
    return std::pow(s, 1.0 / p);
  };
  auto h1normSq = [&](const Vec& v) {
    double s = 0.0;
    for (int i = 0; i < N; ++i)
      s += lumped_mass_[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)] *
           v[static_cast<std::size_t>(i)];
    const QpScalar q = evaluateAtQuadPoints(mesh, v);
    for (std::size_t kk = 0; kk < q.value.size(); ++kk) {
      double g2 = 0.0;
      for (int i = 0; i < mesh.dim(); ++i)
        g2 += q.grad[kk][static_cast<std::size_t>(i)] * q.grad[kk][static_cast<std::size_t>(i)];
      s += mesh.quadWeight() * g2;
    }
    return s;
  };
  auto w1pNorm = [&](const Vec& v) {
    const double p = params.p;
    double s = std::pow(lumpedLp(v, p), p);
    s += p * pGradientEnergy(mesh, v, p, 0.0);
    return std::pow(s, 1.0 / p);
  };

  double sup_c_w1p = 0.0, sup_z_w1p = 0.0, sum_dc2 = 0.0, sum_dz2 = 0.0;
  double sum_mu_h1 = 0.0, sum_th_h1 = 0.0, sup_th_l1 = 0.0, sum_pow_h1 = 0.0, sum_log_h1 = 0.0;
  double sup_u_h1 = 0.0, sup_v_l2 = 0.0, sum_dth_l1 = 0.0, sup_plap_l2 = 0.0, sum_eta_l2 = 0.0;

  for (int k = 0; k <= K; ++k) {
    const State& s = traj_->states[static_cast<std::size_t>(k)];
    sup_c_w1p = std::max(sup_c_w1p, w1pNorm(s.c));
    sup_z_w1p = std::max(sup_z_w1p, w1pNorm(s.z));
    sup_th_l1 = std::max(sup_th_l1, lumpedLp(s.theta, 1.0));

    const Vec plap = pLaplacianResidual(mesh, s.c, params.p, params.eps_p);
    double pl2 = 0.0;
    for (int i = 0; i < N; ++i) {
      const double ri = plap[static_cast<std::size_t>(i)] / lumped_mass_[static_cast<std::size_t>(i)];
      pl2 += lumped_mass_[static_cast<std::size_t>(i)] * ri * ri;
    }
    sup_plap_l2 = std::max(sup_plap_l2, std::sqrt(pl2));

    double uh1 = 0.0, vl2 = 0.0;
    for (int c = 0; c < mesh.dim(); ++c) {
      Vec comp(static_cast<std::size_t>(N));
      Vec compv(static_cast<std::size_t>(N));
      for (int i = 0; i < N; ++i) {
        comp[static_cast<std::size_t>(i)] = s.u[static_cast<std::size_t>(i * mesh.dim() + c)];
        compv[static_cast<std::size_t>(i)] = s.v[static_cast<std::size_t>(i * mesh.dim() + c)];
      }
      uh1 += h1normSq(comp);
      vl2 += std::pow(lumpedLp(compv, 2.0), 2.0);
    }
    sup_u_h1 = std::max(sup_u_h1, std::sqrt(uh1));
    sup_v_l2 = std::max(sup_v_l2, std::sqrt(vl2));

    if (k >= 1) {
      const State& pr = traj_->states[static_cast<std::size_t>(k - 1)];
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const double dc = (s.c[si] - pr.c[si]) / tau;
        const double dz = (s.z[si] - pr.z[si]) / tau;
        sum_dc2 += tau * lumped_mass_[si] * dc * dc;
        sum_dz2 += tau * lumped_mass_[si] * dz * dz;
        sum_dth_l1 += tau * lumped_mass_[si] * std::fabs((s.theta[si] - pr.theta[si]) / tau);
      }
      sum_mu_h1 += tau * h1normSq(s.mu);
      sum_th_h1 += tau * h1normSq(s.theta);
      Vec powv(static_cast<std::size_t>(N)), logv(static_cast<std::size_t>(N)),
          eta(static_cast<std::size_t>(N));
      const double expn = 0.5 * (model.heat.kappa + alpha);
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        powv[si] = std::pow(std::max(s.theta[si], 0.0), expn);
        logv[si] = std::log(std::max(s.theta[si], kLogFloor));
        eta[si] = yosida(s.c[si], model.reg, model.potential);
      }
      sum_pow_h1 += tau * h1normSq(powv);
      sum_log_h1 += tau * h1normSq(logv);
      sum_eta_l2 += tau * std::pow(lumpedLp(eta, 2.0), 2.0);
    }
  }

  return {
      {"sup_k ||c||_W1p", sup_c_w1p},
      {"sum tau ||D_k c||_L2^2", sum_dc2},
      {"sup_k ||p-laplacian(c)||_L2", sup_plap_l2},
      {"sum tau ||beta_omega(c)||_L2^2", sum_eta_l2},
      {"sum tau ||mu||_H1^2", sum_mu_h1},
      {"sup_k ||z||_W1p", sup_z_w1p},
      {"sum tau ||D_k z||_L2^2", sum_dz2},
      {"sum tau ||theta||_H1^2", sum_th_h1},
      {"sup_k ||theta||_L1", sup_th_l1},
      {"sum tau ||theta^((kappa+alpha)/2)||_H1^2", sum_pow_h1},
      {"sum tau ||log theta||_H1^2", sum_log_h1},
      {"sum tau ||D_k theta||_L1", sum_dth_l1},
      {"sup_k ||u||_H1", sup_u_h1},
      {"sup_k ||v||_L2", sup_v_l2},
  };
}

InequalityReport checkTotalEnergyInequality(const Trajectory& traj, double s, double t) {
  TrajectoryAnalyzer an(traj);
  return an.totalEnergyWindow(an.indexOfTime(s), an.indexOfTime(t));
}

InequalityReport checkEntropyInequality(const Trajectory& traj, double s, double t,
                                        const TestFieldPath& phi) {
  TrajectoryAnalyzer an(traj);
  return an.entropyWindow(an.indexOfTime(s), an.indexOfTime(t), phi);
}

std::pair<InequalityReport, InequalityReport> checkDamageInequalities(const Trajectory& traj,
                                                                      double s, double t) {
  TrajectoryAnalyzer an(traj);
  return an.damageWindow(an.indexOfTime(s), an.indexOfTime(t));
}

double thetaFloor(double theta_star, double C, double T) {
  if (theta_star <= 0.0) throw Error(ErrorCode::BadArgument, "thetaFloor: theta_* must be > 0");
  return theta_star / (1.0 + C * T * theta_star);
}

Vec bruteForceMinimize(const OracleProblem& prob, int points_per_axis, int passes) {
  const int n = static_cast<int>(prob.lower.size());
  if (n < 1 || n > 6)
    throw Error(ErrorCode::BadArgument, "brute-force oracle supports 1..6 unknowns");
  Vec lo = prob.lower, hi = prob.upper;
  Vec best;
  double bestval = std::numeric_limits<double>::infinity();
  Vec x(static_cast<std::size_t>(n));
  const int P = points_per_axis;

  for (int pass = 0; pass < passes; ++pass) {
    Vec step(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d)
      step[static_cast<std::size_t>(d)] =
          (hi[static_cast<std::size_t>(d)] - lo[static_cast<std::size_t>(d)]) / (P - 1);
    long total = 1;
    for (int d = 0; d < n; ++d) total *= P;
    bestval = std::numeric_limits<double>::infinity();
    for (long idx = 0; idx < total; ++idx) {
      long rem = idx;
      for (int d = 0; d < n; ++d) {
        const int id = static_cast<int>(rem % P);
        rem /= P;
        x[static_cast<std::size_t>(d)] =
            lo[static_cast<std::size_t>(d)] + id * step[static_cast<std::size_t>(d)];
      }
      const double v = prob.objective(x);
      if (v < bestval) {
        bestval = v;
        best = x;
      }
    }
    // Zoom around the incumbent, clipped to the original constraint box.
    for (int d = 0; d < n; ++d) {
      const std::size_t sd = static_cast<std::size_t>(d);
      const double half = 1.5 * step[sd];
      lo[sd] = std::max(prob.lower[sd], best[sd] - half);
      hi[sd] = std::min(prob.upper[sd], best[sd] + half);
    }
  }

  // A minimizer pinned to a search-box edge that is not a genuine constraint
  // means the box was too small.
  for (int d = 0; d < n; ++d) {
    const std::size_t sd = static_cast<std::size_t>(d);
    if (!prob.bound_is_constraint.empty() && prob.bound_is_constraint[sd]) continue;
    const double span = prob.upper[sd] - prob.lower[sd];
    if (std::fabs(best[sd] - prob.lower[sd]) < 1e-9 * span ||
        std::fabs(best[sd] - prob.upper[sd]) < 1e-9 * span)
      throw Error(ErrorCode::SearchBoxTooSmall,
                  "oracle minimizer sits on the search-box boundary");
  }
  return best;
}

std::function<double(const Vec&)> chIncrementalObjective(const Mesh& mesh,
                                                         const MaterialModel& model,
                                                         const SchemeParams& params,
                                                         const State& prev,
                                                         const Vec& theta_guess) {
  const int N = mesh.numNodes();
  const Vec M = lumpedMass(mesh);
  const LaggedCoefficients lag = freezeCoefficients(mesh, model, prev);
  auto prep = std::make_shared<PreparedElastic>(model.elastic);

  // Pinned mobility stiffness for the H^-1-type transport term.
  SparseMat Sm(N, N);
  {
    std::vector<Eigen::Triplet<double>> trip;
    const SparseMat base = [&] {
      // reuse the weighted stiffness through the residual of a linear field
      // is overkill; assemble directly
      const int npc = mesh.nodesPerCell();
      const int nqp = mesh.quadPointsPerCell();
      std::vector<int> nodes(static_cast<std::size_t>(npc));
      std::vector<Eigen::Triplet<double>> tr;
      for (int c = 0; c < mesh.numCells(); ++c) {
        mesh.cellNodes(c, nodes.data());
        for (int q = 0; q < nqp; ++q) {
          const double w = mesh.quadWeight() * lag.m_qp[static_cast<std::size_t>(c * nqp + q)];
          for (int a = 0; a < npc; ++a)
            for (int b = 0; b < npc; ++b) {
              double g = 0.0;
              for (int i = 0; i < mesh.dim(); ++i)
                g += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
              tr.emplace_back(nodes[static_cast<std::size_t>(a)],
                              nodes[static_cast<std::size_t>(b)], w * g);
            }
        }
      }
      SparseMat A(N, N);
      A.setFromTriplets(tr.begin(), tr.end());
      return A;
    }();
    for (int k = 0; k < base.outerSize(); ++k)
      for (SparseMat::InnerIterator it(base, k); it; ++it)
        if (it.row() != 0) trip.emplace_back(static_cast<int>(it.row()),
                                             static_cast<int>(it.col()), it.value());
    trip.emplace_back(0, 0, 1.0);
    Sm.setFromTriplets(trip.begin(), trip.end());
  }
  auto lu = std::make_shared<Eigen::SparseLU<SparseMat>>();
  Sm.makeCompressed();
  lu->compute(Sm);
  if (lu->info() != Eigen::Success)
    throw Error(ErrorCode::LinearSolveFailure, "oracle: mobility stiffness factorization failed");

  const Vec c_old = prev.c;
  const double tau = params.tau;
  return [=, &mesh, &model](const Vec& c) {
    Eigen::VectorXd rhs(N);
    for (int i = 0; i < N; ++i)
      rhs[i] = M[static_cast<std::size_t>(i)] *
               (c[static_cast<std::size_t>(i)] - c_old[static_cast<std::size_t>(i)]);
    rhs[0] = 0.0;  // pinned node; admissible since the rhs has zero sum
    const Eigen::VectorXd y = lu->solve(rhs);
    double val = 0.0;
    for (int i = 1; i < N; ++i)
      val += M[static_cast<std::size_t>(i)] *
             (c[static_cast<std::size_t>(i)] - c_old[static_cast<std::size_t>(i)]) * y[i];
    val /= 2.0 * tau;

    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const double dc = c[si] - c_old[si];
      val += M[si] * (yosidaPrimitive(c[si], model.reg, model.potential) +
                      0.5 * model.potential.lambda_gamma * dc * dc +
                      model.potential.gammaPrime(c_old[si]) * c[si] - theta_guess[si] * c[si] +
                      dc * dc / (2.0 * tau));
    }
    val += pGradientEnergy(mesh, c, params.p, params.eps_p);
    const QpScalar cq = evaluateAtQuadPoints(mesh, c);
    for (std::size_t k = 0; k < cq.value.size(); ++k) {
      const double dc = cq.value[k] - lag.c_old_qp[k];
      val += mesh.quadWeight() *
             (evalWOmegaP(cq.value[k], lag.eps_old.strain[k], lag.z_old_qp[k], *prep, model.reg) +
              0.5 * lag.lambda1_qp[k] * dc * dc);
    }
    return val;
  };
}

std::function<double(const Vec&)> damageIncrementalObjective(const Mesh& mesh,
                                                             const MaterialModel& model,
                                                             const SchemeParams& params,
                                                             const State& prev, const Vec& c_new,
                                                             const Vec& theta_guess) {
  const int N = mesh.numNodes();
  const Vec M = lumpedMass(mesh);
  const LaggedCoefficients lag = freezeCoefficients(mesh, model, prev);
  auto prep = std::make_shared<PreparedElastic>(model.elastic);
  const QpScalar cq = evaluateAtQuadPoints(mesh, c_new);
  Vec lam3(cq.value.size());
  for (std::size_t k = 0; k < cq.value.size(); ++k)
    lam3[k] = splittingBoundZP(cq.value[k], lag.eps_old.strain[k], *prep, model.reg);
  const Vec z_old = prev.z;
  const double tau = params.tau;
  const Vec c_qp = cq.value;

  return [=, &mesh, &model](const Vec& z) {
    double val = 0.0;
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      const double dz = z[si] - z_old[si];
      val += M[si] * (dz * dz / (2.0 * tau) + model.damage.convValue(z[si]) +
                      model.damage.concPrime(z_old[si]) * z[si] - theta_guess[si] * z[si]);
    }
    val += pGradientEnergy(mesh, z, params.p, params.eps_p);
    const QpScalar zq = evaluateAtQuadPoints(mesh, z);
    for (std::size_t k = 0; k < zq.value.size(); ++k) {
      const double dz = zq.value[k] - lag.z_old_qp[k];
      val += mesh.quadWeight() *
             (evalWOmegaP(c_qp[k], lag.eps_old.strain[k], zq.value[k], *prep, model.reg) +
              0.5 * lam3[k] * dz * dz);
    }
    return val;
  };
}

std::string reportsToCsv(const std::vector<InequalityReport>& reports) {
  std::ostringstream os;
  os << "kind,s,t,lhs,rhs,residual,scale,test,pass\n";
  os.precision(17);
  for (const InequalityReport& r : reports)
    os << r.kind << ',' << r.s << ',' << r.t << ',' << r.lhs << ',' << r.rhs << ','
       << r.residual << ',' << r.scale << ',' << (r.test_id.empty() ? "-" : r.test_id) << ','
       << (r.pass ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace thermophase
