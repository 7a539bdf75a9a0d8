#include "stepper.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace thermophase {

namespace {

using Triplet = Eigen::Triplet<double>;

Eigen::VectorXd toEigen(const Vec& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vec fromEigen(const Eigen::VectorXd& v) {
  return Vec(v.data(), v.data() + v.size());
}

double maxAbs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

Vec solveSparse(const SparseMat& A, const Vec& rhs, const char* what) {
  Eigen::SparseLU<SparseMat> lu;
  SparseMat Ac = A;
  Ac.makeCompressed();
  lu.compute(Ac);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::LinearSolveFailure, std::string(what) + ": factorization failed");
  Eigen::VectorXd x = lu.solve(toEigen(rhs));
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::LinearSolveFailure, std::string(what) + ": solve failed");
  return fromEigen(x);
}

// Derivative of the scalar Yosida regularization (semismooth choice at kinks).
double yosidaSlope(double c, const RegularizationParams& reg, const ConcentrationPotential& pot) {
  if (pot.kind == ConcentrationPotential::Kind::Indicator)
    return (c < pot.c_lo || c > pot.c_hi) ? 1.0 / reg.omega_reg : 0.0;
  const double r = yosidaResolvent(c, reg, pot);
  return 3.0 * r * r / (1.0 + 3.0 * reg.omega_reg * r * r);
}

// m(c_old, z_old)-weighted stiffness for the chemical-potential flux.
SparseMat assembleWeightedStiffness(const Mesh& mesh, const Vec& coeff_qp) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Triplet> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const double w = mesh.quadWeight() * coeff_qp[static_cast<std::size_t>(c * nqp + q)];
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b) {
          double g = 0.0;
          for (int i = 0; i < dim; ++i) g += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
          trip.emplace_back(nodes[static_cast<std::size_t>(a)],
                            nodes[static_cast<std::size_t>(b)], w * g);
        }
    }
  }
  SparseMat A(mesh.numNodes(), mesh.numNodes());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

// Residual and Jacobian of the nu |eps(w)|^{varrho-2} eps(w) : eps(psi) term.
Vec vectorPLaplacianResidual(const Mesh& mesh, const Vec& w, double varrho) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpStrain eq = strainAtQuadPoints(mesh, w);
  Vec r(w.size(), 0.0);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      const double n2 = eq.strain[k].ddot(eq.strain[k]);
      const double coef = std::pow(n2, 0.5 * (varrho - 2.0));
      if (coef == 0.0) continue;
      for (int a = 0; a < npc; ++a)
        for (int al = 0; al < dim; ++al) {
          // eps(psi_{a,al}) : eps(w) = grad_al psi_a . row_al of eps(w)
          double dot = 0.0;
          for (int i = 0; i < dim; ++i)
            dot += eq.strain[k].comp(al, i) * mesh.shapeGrad(q, a, i);
          r[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)] * dim + al)] +=
              mesh.quadWeight() * coef * dot;
        }
    }
  }
  return r;
}

SparseMat vectorPLaplacianJacobian(const Mesh& mesh, const Vec& w, double varrho) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpStrain eq = strainAtQuadPoints(mesh, w);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Triplet> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      const double n2 = eq.strain[k].ddot(eq.strain[k]);
      const double coef = std::pow(n2, 0.5 * (varrho - 2.0));
      const double dcoef = n2 > 0 ? (varrho - 2.0) * std::pow(n2, 0.5 * (varrho - 4.0)) : 0.0;
      for (int a = 0; a < npc; ++a)
        for (int al = 0; al < dim; ++al) {
          double da = 0.0;
          for (int i = 0; i < dim; ++i)
            da += eq.strain[k].comp(al, i) * mesh.shapeGrad(q, a, i);
          for (int b = 0; b < npc; ++b)
            for (int be = 0; be < dim; ++be) {
              double db = 0.0;
              for (int i = 0; i < dim; ++i)
                db += eq.strain[k].comp(be, i) * mesh.shapeGrad(q, b, i);
              double gg = 0.0;
              for (int i = 0; i < dim; ++i)
                gg += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
              double entry = dcoef * da * db +
                             coef * 0.5 * (mesh.shapeGrad(q, a, be) * mesh.shapeGrad(q, b, al) +
                                           (al == be ? gg : 0.0));
              trip.emplace_back(nodes[static_cast<std::size_t>(a)] * dim + al,
                                nodes[static_cast<std::size_t>(b)] * dim + be,
                                mesh.quadWeight() * entry);
            }
        }
    }
  }
  SparseMat J(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(w.size()));
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

}  // namespace

Vec dTau(const Vec& v_new, const Vec& v_old, double tau) {
  if (tau <= 0.0) throw Error(ErrorCode::BadArgument, "dTau: tau must be positive");
  Vec d(v_new.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (v_new[i] - v_old[i]) / tau;
  return d;
}

std::pair<State, Vec> initStates(const Mesh& mesh, const MaterialModel& model,
                                 const SchemeParams& params, const DataSampler& data,
                                 const InitialData& init) {
  const int N = mesh.numNodes();
  const int dim = mesh.dim();
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::InvalidInitialData, "initial data: " + what);
  };
  if (static_cast<int>(init.c0.size()) != N || static_cast<int>(init.z0.size()) != N ||
      static_cast<int>(init.theta0.size()) != N)
    fail("scalar fields must have one value per node");
  if (static_cast<int>(init.u0.size()) != N * dim || static_cast<int>(init.v0.size()) != N * dim)
    fail("vector fields must have dim values per node");

  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (!(init.theta0[si] > 0.0))
      fail("temperature must be strictly positive everywhere (theta0 >= theta_* > 0)");
    if (init.z0[si] < 0.0 || init.z0[si] > 1.0) fail("damage must satisfy 0 <= z0 <= 1");
    if (model.potential.kind == ConcentrationPotential::Kind::Indicator &&
        (init.c0[si] < model.potential.c_lo || init.c0[si] > model.potential.c_hi))
      fail("concentration outside the potential domain (betaHat(c0) must be finite)");
  }

  // Dirichlet compatibility u0 = u_D(0) on the boundary.
  const Vec d0 = data.uDNodal(mesh, 0.0);
  for (int n : mesh.boundaryNodes())
    for (int d = 0; d < dim; ++d) {
      const std::size_t k = static_cast<std::size_t>(n * dim + d);
      if (std::fabs(init.u0[k] - d0[k]) > 1e-12 * (1.0 + std::fabs(d0[k])))
        fail("u0 must match the Dirichlet datum at t = 0 on the boundary");
    }

  State s0;
  s0.k = 0;
  s0.c = init.c0;
  s0.z = init.z0;
  s0.theta = init.theta0;
  s0.u = init.u0;
  s0.v = init.v0;
  s0.mu.assign(static_cast<std::size_t>(N), 0.0);

  Vec ghost(init.u0.size());
  for (std::size_t i = 0; i < ghost.size(); ++i)
    ghost[i] = init.u0[i] - params.tau * init.v0[i];
  return {std::move(s0), std::move(ghost)};
}

LaggedCoefficients freezeCoefficients(const Mesh& mesh, const MaterialModel& model,
                                      const State& prev) {
  LaggedCoefficients lag;
  const int nqp = mesh.quadPointsPerCell();
  const QpScalar cq = evaluateAtQuadPoints(mesh, prev.c);
  const QpScalar zq = evaluateAtQuadPoints(mesh, prev.z);
  lag.eps_old = strainAtQuadPoints(mesh, prev.u);
  const std::size_t total = static_cast<std::size_t>(mesh.numCells() * nqp);
  lag.m_qp.resize(total);
  lag.a_qp.resize(total);
  lag.lambda1_qp.resize(total);
  lag.c_old_qp = cq.value;
  lag.z_old_qp = zq.value;
  const PreparedElastic prep(model.elastic);
  for (std::size_t k = 0; k < total; ++k) {
    lag.m_qp[k] = model.mobilityAt(cq.value[k], zq.value[k]);
    lag.a_qp[k] = model.viscosityCoeffAt(cq.value[k], zq.value[k]);
    lag.lambda1_qp[k] = splittingBoundCP(lag.eps_old.strain[k], zq.value[k], prep, model.reg);
  }
  return lag;
}

HeatSourceTerms computeHeatSourceTerms(const Mesh& mesh, const MaterialModel& model,
                                       const Vec& a_qp, const Vec& m_qp, const State& prev,
                                       const Vec& c_new, const Vec& z_new, const Vec& u_new,
                                       const Vec& mu_new, const Vec& g_nodal, double tau) {
  HeatSourceTerms src;
  src.dc = dTau(c_new, prev.c, tau);
  src.dz = dTau(z_new, prev.z, tau);
  src.g = g_nodal;

  const Vec du = dTau(u_new, prev.u, tau);
  const QpStrain dstrain = strainAtQuadPoints(mesh, du);
  const QpScalar muq = evaluateAtQuadPoints(mesh, mu_new);
  const IsotropicTensor V = model.elastic.viscosity();
  const int nqp = mesh.quadPointsPerCell();
  const std::size_t total = static_cast<std::size_t>(mesh.numCells() * nqp);
  Vec visc_qp(total), mob_qp(total);
  for (std::size_t k = 0; k < total; ++k) {
    visc_qp[k] = a_qp[k] * V.apply(dstrain.strain[k]).ddot(dstrain.strain[k]);
    double g2 = 0.0;
    for (int i = 0; i < mesh.dim(); ++i)
      g2 += muq.grad[k][static_cast<std::size_t>(i)] * muq.grad[k][static_cast<std::size_t>(i)];
    mob_qp[k] = m_qp[k] * g2;
  }
  const Vec M = lumpedMass(mesh);
  Vec visc_I = integrateAgainstBasis(mesh, visc_qp);
  Vec mob_I = integrateAgainstBasis(mesh, mob_qp);
  Vec div_I = integrateAgainstBasis(mesh, dstrain.div);
  src.visc.resize(visc_I.size());
  src.mob.resize(mob_I.size());
  src.divP.resize(div_I.size());
  for (std::size_t i = 0; i < visc_I.size(); ++i) {
    src.visc[i] = visc_I[i] / M[i];
    src.mob[i] = mob_I[i] / M[i];
    src.divP[i] = div_I[i] / M[i];
  }
  return src;
}

CHBlockResult solveCHBlock(const Mesh& mesh, const MaterialModel& model,
                           const SchemeParams& params, const State& prev,
                           const LaggedCoefficients& lag, const Vec& theta_guess,
                           const Vec& c_init, const Vec& mu_init) {
  const int N = mesh.numNodes();
  const int nqp = mesh.quadPointsPerCell();
  const double tau = params.tau;
  const double nu = params.nu;
  const double rho_exp = params.varrho;
  const Vec M = lumpedMass(mesh);
  const SparseMat Sm = assembleWeightedStiffness(mesh, lag.m_qp);
  const PreparedElastic prep(model.elastic);
  HeatModel heatEff = model.heat;
  heatEff.M = params.M_trunc;

  Vec c = c_init, mu = mu_init;

  auto residual = [&](const Vec& cc, const Vec& mm, Vec& F) {
    F.assign(static_cast<std::size_t>(2 * N), 0.0);
    const Eigen::VectorXd smmu = Sm * toEigen(mm);
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      F[si] = M[si] * (cc[si] - prev.c[si]) / tau + smmu[i];
      if (nu != 0.0) F[si] += nu * M[si] * mm[si];
      double fmu = -mm[si] + yosida(cc[si], model.reg, model.potential) +
                   model.potential.lambda_gamma * (cc[si] - prev.c[si]) +
                   model.potential.gammaPrime(prev.c[si]) -
                   evalTM(theta_guess[si], heatEff) + (cc[si] - prev.c[si]) / tau;
      if (nu != 0.0) fmu += nu * std::pow(std::fabs(cc[si]), rho_exp - 2.0) * cc[si];
      F[static_cast<std::size_t>(N + i)] = M[si] * fmu;
    }
    if (nu != 0.0) {
      const Vec rmu = pLaplacianResidual(mesh, mm, rho_exp, 0.0);
      for (int i = 0; i < N; ++i) F[static_cast<std::size_t>(i)] += nu * rmu[static_cast<std::size_t>(i)];
    }
    const Vec rc = pLaplacianResidual(mesh, cc, params.p, params.eps_p);
    // W-drive at quadrature points with the lagged strain and damage
    const QpScalar cq = evaluateAtQuadPoints(mesh, cc);
    const std::size_t total = static_cast<std::size_t>(mesh.numCells() * nqp);
    Vec drive_qp(total);
    for (std::size_t k = 0; k < total; ++k) {
      const WDerivatives wd =
          evalWOmegaDerivativesP(cq.value[k], lag.eps_old.strain[k], lag.z_old_qp[k], prep,
                                 model.reg);
      drive_qp[k] = wd.Wc + lag.lambda1_qp[k] * (cq.value[k] - lag.c_old_qp[k]);
    }
    const Vec wdrive = integrateAgainstBasis(mesh, drive_qp);
    for (int i = 0; i < N; ++i)
      F[static_cast<std::size_t>(N + i)] +=
          rc[static_cast<std::size_t>(i)] + wdrive[static_cast<std::size_t>(i)];
  };

  auto jacobian = [&](const Vec& cc, const Vec& mm) {
    std::vector<Triplet> trip;
    // dFc/dc, dFc/dmu
    for (int i = 0; i < N; ++i) {
      trip.emplace_back(i, i, M[static_cast<std::size_t>(i)] / tau);
      if (nu != 0.0) trip.emplace_back(i, N + i, nu * M[static_cast<std::size_t>(i)]);
    }
    for (int k = 0; k < Sm.outerSize(); ++k)
      for (SparseMat::InnerIterator it(Sm, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), N + static_cast<int>(it.col()), it.value());
    if (nu != 0.0) {
      const SparseMat Jmu = pLaplacianJacobian(mesh, mm, rho_exp, 0.0);
      for (int k = 0; k < Jmu.outerSize(); ++k)
        for (SparseMat::InnerIterator it(Jmu, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()), N + static_cast<int>(it.col()),
                            nu * it.value());
    }
    // dFmu/dc: lumped part
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      double diag = yosidaSlope(cc[si], model.reg, model.potential) +
                    model.potential.lambda_gamma + 1.0 / tau;
      if (nu != 0.0) diag += nu * (rho_exp - 1.0) * std::pow(std::fabs(cc[si]), rho_exp - 2.0);
      trip.emplace_back(N + i, i, M[si] * diag);
      trip.emplace_back(N + i, N + i, -M[si]);
    }
    const SparseMat Jc = pLaplacianJacobian(mesh, cc, params.p, params.eps_p);
    for (int k = 0; k < Jc.outerSize(); ++k)
      for (SparseMat::InnerIterator it(Jc, k); it; ++it)
        trip.emplace_back(N + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    // W-drive curvature
    const QpScalar cq = evaluateAtQuadPoints(mesh, cc);
    const int npc = mesh.nodesPerCell();
    std::vector<int> nodes(static_cast<std::size_t>(npc));
    for (int cell = 0; cell < mesh.numCells(); ++cell) {
      mesh.cellNodes(cell, nodes.data());
      for (int q = 0; q < nqp; ++q) {
        const std::size_t k = static_cast<std::size_t>(cell * nqp + q);
        const WDerivatives wd = evalWOmegaDerivativesP(cq.value[k], lag.eps_old.strain[k],
                                                       lag.z_old_qp[k], prep, model.reg);
        const double curv = wd.Wcc + lag.lambda1_qp[k];
        for (int a = 0; a < npc; ++a)
          for (int b = 0; b < npc; ++b)
            trip.emplace_back(N + nodes[static_cast<std::size_t>(a)],
                              nodes[static_cast<std::size_t>(b)],
                              mesh.quadWeight() * curv * mesh.shape(q, a) * mesh.shape(q, b));
      }
    }
    SparseMat J(2 * N, 2 * N);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  };

  auto scaledNorm = [&](const Vec& F) {
    double m = 0.0;
    for (int i = 0; i < 2 * N; ++i)
      m = std::max(m, std::fabs(F[static_cast<std::size_t>(i)]) /
                          M[static_cast<std::size_t>(i % N)]);
    return m;
  };

  Vec F;
  residual(c, mu, F);
  double err = scaledNorm(F);
  const double tol = params.solver.newton_tol * (1.0 + 1.0 / tau);
  CHBlockResult out;
  for (int it = 0; it < params.solver.max_newton && err > tol; ++it) {
    const SparseMat J = jacobian(c, mu);
    Vec negF(F.size());
    for (std::size_t i = 0; i < F.size(); ++i) negF[i] = -F[i];
    const Vec dx = solveSparse(J, negF, "cahn-hilliard");
    double alpha = params.solver.damping;
    Vec c_try(c.size()), mu_try(mu.size());
    for (int ls = 0; ls < 12; ++ls) {
      for (int i = 0; i < N; ++i) {
        c_try[static_cast<std::size_t>(i)] =
            c[static_cast<std::size_t>(i)] + alpha * dx[static_cast<std::size_t>(i)];
        mu_try[static_cast<std::size_t>(i)] =
            mu[static_cast<std::size_t>(i)] + alpha * dx[static_cast<std::size_t>(N + i)];
      }
      Vec F_try;
      residual(c_try, mu_try, F_try);
      const double err_try = scaledNorm(F_try);
      if (err_try < err || err_try <= tol) {
        c.swap(c_try);
        mu.swap(mu_try);
        F.swap(F_try);
        err = err_try;
        break;
      }
      alpha *= 0.5;
      if (ls == 11) {
        c.swap(c_try);
        mu.swap(mu_try);
        F.swap(F_try);
        err = err_try;
      }
    }
    out.newton_iters = it + 1;
  }
  if (err > tol) {
    std::ostringstream os;
    os << "cahn-hilliard block: newton stalled at residual " << err;
    throw Error(ErrorCode::NewtonDivergence, os.str());
  }
  out.c = std::move(c);
  out.mu = std::move(mu);
  out.residual = err;
  return out;
}

DamageBlockResult solveDamageBlock(const Mesh& mesh, const MaterialModel& model,
                                   const SchemeParams& params, const State& prev,
                                   const LaggedCoefficients& lag, const Vec& c_new,
                                   const Vec& theta_guess, const Vec& z_init) {
  const int N = mesh.numNodes();
  const int nqp = mesh.quadPointsPerCell();
  const double tau = params.tau;
  const double nu = params.nu;
  const double rho_exp = params.varrho;
  const Vec M = lumpedMass(mesh);
  const PreparedElastic prep(model.elastic);
  HeatModel heatEff = model.heat;
  heatEff.M = params.M_trunc;

  // z-drive pieces at quadrature points; c_new is fixed within the block.
  const QpScalar cq = evaluateAtQuadPoints(mesh, c_new);
  const std::size_t total = static_cast<std::size_t>(mesh.numCells() * nqp);
  Vec lambda3_qp(total), rc_qp(total), qstrain_qp(total);
  for (std::size_t k = 0; k < total; ++k) {
    lambda3_qp[k] = splittingBoundZP(cq.value[k], lag.eps_old.strain[k], prep, model.reg);
    const TruncationEval R = smoothTruncation(cq.value[k], model.reg);
    rc_qp[k] = R.value;
    const SymTensor e =
        lag.eps_old.strain[k] - model.elastic.eigenstrain(mesh.dim(), R.value);
    qstrain_qp[k] = model.elastic.stiffness().apply(e).ddot(e);
  }

  // Residual without the constraint multiplier.
  auto residualNoXi = [&](const Vec& zz, Vec& G) {
    G.assign(static_cast<std::size_t>(N), 0.0);
    const QpScalar zq = evaluateAtQuadPoints(mesh, zz);
    Vec drive_qp(total);
    for (std::size_t k = 0; k < total; ++k) {
      const double wz = 0.5 * prep.bz.eval(rc_qp[k], zq.value[k]) * qstrain_qp[k];
      drive_qp[k] = wz + lambda3_qp[k] * (zq.value[k] - lag.z_old_qp[k]);
    }
    const Vec wdrive = integrateAgainstBasis(mesh, drive_qp);
    const Vec rp = pLaplacianResidual(mesh, zz, params.p, params.eps_p);
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      double g = (zz[si] - prev.z[si]) / tau + model.damage.convPrime(zz[si]) +
                 model.damage.concPrime(prev.z[si]) - evalTM(theta_guess[si], heatEff);
      if (nu != 0.0) g += nu * std::pow(std::fabs(zz[si]), rho_exp - 2.0) * zz[si];
      G[si] = M[si] * g + rp[si] + wdrive[si];
    }
  };

  auto jacobianNoXi = [&](const Vec& zz) {
    std::vector<Triplet> trip;
    const QpScalar zq = evaluateAtQuadPoints(mesh, zz);
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      double diag = 1.0 / tau + model.damage.doublePrime(zz[si]) + model.damage.L;
      if (nu != 0.0) diag += nu * (rho_exp - 1.0) * std::pow(std::fabs(zz[si]), rho_exp - 2.0);
      trip.emplace_back(i, i, M[si] * diag);
    }
    const SparseMat Jp = pLaplacianJacobian(mesh, zz, params.p, params.eps_p);
    for (int k = 0; k < Jp.outerSize(); ++k)
      for (SparseMat::InnerIterator it(Jp, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    const int npc = mesh.nodesPerCell();
    std::vector<int> nodes(static_cast<std::size_t>(npc));
    for (int cell = 0; cell < mesh.numCells(); ++cell) {
      mesh.cellNodes(cell, nodes.data());
      for (int q = 0; q < nqp; ++q) {
        const std::size_t k = static_cast<std::size_t>(cell * nqp + q);
        const double curv =
            0.5 * prep.bzz.eval(rc_qp[k], zq.value[k]) * qstrain_qp[k] + lambda3_qp[k];
        for (int a = 0; a < npc; ++a)
          for (int b = 0; b < npc; ++b)
            trip.emplace_back(nodes[static_cast<std::size_t>(a)],
                              nodes[static_cast<std::size_t>(b)],
                              mesh.quadWeight() * curv * mesh.shape(q, a) * mesh.shape(q, b));
      }
    }
    SparseMat J(N, N);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  };

  // Primal-dual active set on the bilateral constraint 0 <= z <= z_old.
  Vec z = z_init;
  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    z[si] = std::clamp(z[si], 0.0, prev.z[si]);
  }
  Vec xi(static_cast<std::size_t>(N), 0.0);
  std::vector<int> active(static_cast<std::size_t>(N), 0);  // +1 upper, -1 lower, 0 inactive
  const double kappa = 1.0;
  const double tol = params.solver.newton_tol * (1.0 + 1.0 / tau);

  DamageBlockResult out;
  bool sets_stable = false;
  for (int pdas = 0; pdas < params.solver.pdas_max_iter && !sets_stable; ++pdas) {
    out.pdas_iters = pdas + 1;
    // Update active sets from the current primal-dual pair.
    std::vector<int> next(static_cast<std::size_t>(N), 0);
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      if (xi[si] + kappa * (z[si] - prev.z[si]) > 0)
        next[si] = +1;
      else if (xi[si] + kappa * z[si] < 0)
        next[si] = -1;
    }
    sets_stable = (pdas > 0 && next == active);
    active = next;
    if (sets_stable) break;

    // Solve the reduced nonlinear system on the inactive set.
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      if (active[si] == +1) z[si] = prev.z[si];
      if (active[si] == -1) z[si] = 0.0;
    }
    Vec G;
    residualNoXi(z, G);
    auto reducedErr = [&]() {
      double m = 0.0;
      for (int i = 0; i < N; ++i)
        if (active[static_cast<std::size_t>(i)] == 0)
          m = std::max(m, std::fabs(G[static_cast<std::size_t>(i)]) /
                              M[static_cast<std::size_t>(i)]);
      return m;
    };
    double err = reducedErr();
    for (int it = 0; it < params.solver.max_newton && err > tol; ++it) {
      SparseMat J = jacobianNoXi(z);
      // Condense active rows to identity.
      std::vector<Triplet> trip;
      for (int k = 0; k < J.outerSize(); ++k)
        for (SparseMat::InnerIterator jt(J, k); jt; ++jt) {
          if (active[static_cast<std::size_t>(jt.row())] != 0) continue;
          trip.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
        }
      Vec rhs(static_cast<std::size_t>(N), 0.0);
      for (int i = 0; i < N; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        if (active[si] != 0)
          trip.emplace_back(i, i, 1.0);
        else
          rhs[si] = -G[si];
      }
      SparseMat Jr(N, N);
      Jr.setFromTriplets(trip.begin(), trip.end());
      const Vec dz = solveSparse(Jr, rhs, "damage");
      for (int i = 0; i < N; ++i) z[static_cast<std::size_t>(i)] += dz[static_cast<std::size_t>(i)];
      residualNoXi(z, G);
      err = reducedErr();
    }
    if (err > tol)
      throw Error(ErrorCode::NewtonDivergence, "damage block: inner newton stalled");
    // Multiplier from the equation residual.
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      xi[si] = active[si] != 0 ? -G[si] / M[si] : 0.0;
    }
    out.residual = err;
  }
  if (!sets_stable)
    throw Error(ErrorCode::ActiveSetCycling, "damage block: active set did not settle");

  out.active_upper = static_cast<int>(std::count(active.begin(), active.end(), +1));
  out.active_lower = static_cast<int>(std::count(active.begin(), active.end(), -1));
  double gap = 0.0;
  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    gap = std::max(gap, std::fabs(xi[si]) * std::min(z[si], prev.z[si] - z[si]));
  }
  out.complementarity_gap = gap;
  out.z = std::move(z);
  out.xi = std::move(xi);
  return out;
}

MomentumBlockResult solveMomentumBlock(const Mesh& mesh, const MaterialModel& model,
                                       const SchemeParams& params, const State& prev,
                                       const Vec& u_prevprev, const LaggedCoefficients& lag,
                                       const Vec& c_new, const Vec& z_new, const Vec& theta_guess,
                                       const Vec& f_nodal, const Vec& d_new) {
  const int N = mesh.numNodes();
  const int dim = mesh.dim();
  const int ndof = N * dim;
  const double tau = params.tau;
  const double nu = params.nu;
  const Vec M = lumpedMass(mesh);
  HeatModel heatEff = model.heat;
  heatEff.M = params.M_trunc;

  const SparseMat Avisc = assembleViscosityMatrix(mesh, lag.a_qp, model.elastic.viscosity());
  const StressForms Sf = assembleStressForms(mesh, c_new, z_new, model.elastic, model.reg);
  Vec theta_trunc(theta_guess.size());
  for (std::size_t i = 0; i < theta_guess.size(); ++i)
    theta_trunc[i] = evalTM(theta_guess[i], heatEff);
  const Vec Lrho = thermalPressureLoad(mesh, theta_trunc, model.heat.rho);

  std::vector<bool> dirichlet(static_cast<std::size_t>(ndof), false);
  for (int n : mesh.boundaryNodes())
    for (int d = 0; d < dim; ++d) dirichlet[static_cast<std::size_t>(n * dim + d)] = true;

  // System matrix of the linear part.
  std::vector<Triplet> trip;
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < dim; ++d)
      trip.emplace_back(i * dim + d, i * dim + d, M[static_cast<std::size_t>(i)] / (tau * tau));
  for (int k = 0; k < Avisc.outerSize(); ++k)
    for (SparseMat::InnerIterator it(Avisc, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value() / tau);
  for (int k = 0; k < Sf.matrix.outerSize(); ++k)
    for (SparseMat::InnerIterator it(Sf.matrix, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  SparseMat A(ndof, ndof);
  A.setFromTriplets(trip.begin(), trip.end());

  Vec rhs(static_cast<std::size_t>(ndof), 0.0);
  {
    const Eigen::VectorXd visc_old = Avisc * toEigen(prev.u);
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < dim; ++d) {
        const std::size_t k = static_cast<std::size_t>(i * dim + d);
        rhs[k] = M[static_cast<std::size_t>(i)] *
                     (2.0 * prev.u[k] - u_prevprev[k]) / (tau * tau) +
                 visc_old[static_cast<Eigen::Index>(k)] / tau + Sf.eigenstrain_load[k] +
                 Lrho[k] + M[static_cast<std::size_t>(i)] * f_nodal[k];
      }
  }

  auto applyDirichletRows = [&](SparseMat& mat) {
    for (int k = 0; k < mat.outerSize(); ++k)
      for (SparseMat::InnerIterator it(mat, k); it; ++it)
        if (dirichlet[static_cast<std::size_t>(it.row())])
          it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
  };

  MomentumBlockResult out;
  if (nu == 0.0) {
    SparseMat Ad = A;
    applyDirichletRows(Ad);
    Vec b = rhs;
    for (int i = 0; i < ndof; ++i)
      if (dirichlet[static_cast<std::size_t>(i)]) b[static_cast<std::size_t>(i)] = d_new[static_cast<std::size_t>(i)];
    out.u = solveSparse(Ad, b, "momentum");
    out.newton_iters = 1;
  } else {
    // nu |eps(u - d)|^{varrho-2} eps(u - d) makes the block nonlinear.
    Vec u = prev.u;
    for (int i = 0; i < ndof; ++i)
      if (dirichlet[static_cast<std::size_t>(i)]) u[static_cast<std::size_t>(i)] = d_new[static_cast<std::size_t>(i)];
    const double tol = params.solver.newton_tol * (1.0 + 1.0 / (tau * tau));
    for (int it = 0; it < params.solver.max_newton; ++it) {
      Vec w(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) w[i] = u[i] - d_new[i];
      Vec F = fromEigen(A * toEigen(u));
      const Vec rnu = vectorPLaplacianResidual(mesh, w, params.varrho);
      double err = 0.0;
      for (int i = 0; i < ndof; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        F[si] += nu * rnu[si] - rhs[si];
        if (dirichlet[si]) F[si] = u[si] - d_new[si];
        err = std::max(err, std::fabs(F[si]) / M[static_cast<std::size_t>(i / dim)]);
      }
      out.newton_iters = it + 1;
      if (err <= tol) break;
      SparseMat J = A + nu * vectorPLaplacianJacobian(mesh, w, params.varrho);
      applyDirichletRows(J);
      Vec negF(F.size());
      for (std::size_t i = 0; i < F.size(); ++i) negF[i] = -F[i];
      const Vec du = solveSparse(J, negF, "momentum");
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += du[i];
      if (it + 1 == params.solver.max_newton)
        throw Error(ErrorCode::NewtonDivergence, "momentum block: newton stalled");
    }
    out.u = std::move(u);
  }

  out.v = dTau(out.u, prev.u, tau);
  return out;
}

TemperatureBlockResult solveTemperatureBlock(const Mesh& mesh, const MaterialModel& model,
                                             const SchemeParams& params, const State& prev,
                                             const HeatSourceTerms& src, const Vec& hload,
                                             const Vec& theta_init) {
  const int N = mesh.numNodes();
  const double tau = params.tau;
  const Vec M = lumpedMass(mesh);
  HeatModel heatEff = model.heat;
  heatEff.M = params.M_trunc;
  const bool use_KM = std::isfinite(heatEff.M);
  const double rho = model.heat.rho;

  Vec r(static_cast<std::size_t>(N)), S(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    r[si] = src.dc[si] + src.dz[si] + rho * src.divP[si];
    S[si] = src.g[si] + src.dc[si] * src.dc[si] + src.dz[si] * src.dz[si] + src.visc[si] +
            src.mob[si];
  }

  auto residual = [&](const Vec& th, Vec& F) {
    F = heatDiffusionResidual(mesh, th, heatEff, use_KM, hload);
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      F[si] += M[si] * ((th[si] - prev.theta[si]) / tau + r[si] * evalTM(th[si], heatEff) - S[si]);
    }
  };

  Vec theta = theta_init;
  Vec F;
  residual(theta, F);
  auto scaledNorm = [&](const Vec& FF) {
    double m = 0.0;
    for (int i = 0; i < N; ++i)
      m = std::max(m, std::fabs(FF[static_cast<std::size_t>(i)]) / M[static_cast<std::size_t>(i)]);
    return m;
  };
  double err = scaledNorm(F);
  const double tol = params.solver.newton_tol * (1.0 + 1.0 / tau);
  TemperatureBlockResult out;
  for (int it = 0; it < params.solver.max_newton && err > tol; ++it) {
    SparseMat J = heatDiffusionJacobian(mesh, theta, heatEff, use_KM);
    std::vector<Triplet> trip;
    for (int i = 0; i < N; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      trip.emplace_back(i, i, M[si] * (1.0 / tau + r[si] * evalTMPrime(theta[si], heatEff)));
    }
    SparseMat D(N, N);
    D.setFromTriplets(trip.begin(), trip.end());
    J = J + D;
    Vec negF(F.size());
    for (std::size_t i = 0; i < F.size(); ++i) negF[i] = -F[i];
    const Vec dth = solveSparse(J, negF, "temperature");
    double alpha = params.solver.damping;
    Vec th_try(theta.size());
    for (int ls = 0; ls < 12; ++ls) {
      for (std::size_t i = 0; i < theta.size(); ++i) th_try[i] = theta[i] + alpha * dth[i];
      Vec F_try;
      residual(th_try, F_try);
      const double err_try = scaledNorm(F_try);
      if (err_try < err || err_try <= tol) {
        theta.swap(th_try);
        F.swap(F_try);
        err = err_try;
        break;
      }
      alpha *= 0.5;
      if (ls == 11) throw Error(ErrorCode::NewtonDivergence, "temperature block: line search failed");
    }
    out.newton_iters = it + 1;
  }
  if (err > tol)
    throw Error(ErrorCode::NewtonDivergence, "temperature block: newton stalled");
  for (int i = 0; i < N; ++i)
    if (!(theta[static_cast<std::size_t>(i)] > 0.0))
      throw Error(ErrorCode::PositivityLoss,
                  "temperature lost positivity after a converged solve");
  out.theta = std::move(theta);
  out.residual = err;
  return out;
}

namespace {

/// Worst pointwise margin of the convex-concave and convexity estimates over
/// the accepted increment (all should be >= -roundoff).
double minSplitMargin(const Mesh& mesh, const MaterialModel& model, const SchemeParams& params,
                      const State& prev, const State& next, const LaggedCoefficients& lag) {
  const PreparedElastic prep(model.elastic);
  const int nqp = mesh.quadPointsPerCell();
  double margin = std::numeric_limits<double>::infinity();

  const QpScalar cq = evaluateAtQuadPoints(mesh, next.c);
  const QpScalar zq = evaluateAtQuadPoints(mesh, next.z);
  const QpStrain eq = strainAtQuadPoints(mesh, next.u);
  for (int cell = 0; cell < mesh.numCells(); ++cell)
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(cell * nqp + q);
      const double cn = cq.value[k], co = lag.c_old_qp[k];
      const double zn = zq.value[k], zo = lag.z_old_qp[k];
      const WDerivatives dc = evalWOmegaDerivativesP(cn, lag.eps_old.strain[k], zo, prep, model.reg);
      const double drive_c = dc.Wc + lag.lambda1_qp[k] * (cn - co);
      const WDerivatives dz = evalWOmegaDerivativesP(cn, lag.eps_old.strain[k], zn, prep, model.reg);
      const double lam3 = splittingBoundZP(cn, lag.eps_old.strain[k], prep, model.reg);
      const double drive_z = dz.Wz + lam3 * (zn - zo);
      const SymTensor stress = evalWOmegaDerivativesP(cn, eq.strain[k], zn, prep, model.reg).Weps;
      const double lhs = drive_c * (cn - co) + drive_z * (zn - zo) +
                         stress.ddot(eq.strain[k] - lag.eps_old.strain[k]);
      const double rhs = evalWOmegaP(cn, eq.strain[k], zn, prep, model.reg) -
                         evalWOmegaP(co, lag.eps_old.strain[k], zo, prep, model.reg);
      margin = std::min(margin, lhs - rhs);
    }

  for (int i = 0; i < mesh.numNodes(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const double cn = next.c[si], co = prev.c[si];
    const double phid = phiSplittingDrive(cn, co, model.reg, model.potential);
    margin = std::min(margin, phid * (cn - co) -
                                  (phiOmegaValue(cn, model.reg, model.potential) -
                                   phiOmegaValue(co, model.reg, model.potential)));
    const double zn = next.z[si], zo = prev.z[si];
    const double sigd = model.damage.convPrime(zn) + model.damage.concPrime(zo);
    margin = std::min(margin, sigd * (zn - zo) - (model.damage.value(zn) - model.damage.value(zo)));
  }
  (void)params;
  return margin;
}

std::pair<State, StepReport> solveStepOnce(const Mesh& mesh, const MaterialModel& model,
                                           const SchemeParams& params, const DataSampler& data,
                                           const State& prev, const Vec& u_prevprev, int k,
                                           double t_old, double t_new, const State* warm) {
  const int N = mesh.numNodes();
  const double tau = params.tau;
  const Vec M = lumpedMass(mesh);
  const LaggedCoefficients lag = freezeCoefficients(mesh, model, prev);

  const Vec g_nodal = [&] {
    Vec g(static_cast<std::size_t>(N), 0.0);
    if (!data.g().isZero())
      for (int n = 0; n < N; ++n)
        g[static_cast<std::size_t>(n)] = data.g().scalarMean(mesh.nodeCoords(n), t_old, t_new);
    return g;
  }();
  const Vec h_nodal = [&] {
    Vec h(static_cast<std::size_t>(N), 0.0);
    if (!data.h().isZero())
      for (int n : mesh.boundaryNodes())
        h[static_cast<std::size_t>(n)] = data.h().scalarMean(mesh.nodeCoords(n), t_old, t_new);
    return h;
  }();
  const Vec hload = boundaryFluxLoad(mesh, h_nodal);
  const Vec f_nodal = [&] {
    Vec f(static_cast<std::size_t>(N * mesh.dim()), 0.0);
    if (!data.f().isZero())
      for (int n = 0; n < N; ++n) {
        const auto fv = data.f().vectorMean(mesh.nodeCoords(n), t_old, t_new);
        for (int d = 0; d < mesh.dim(); ++d)
          f[static_cast<std::size_t>(n * mesh.dim() + d)] = fv[static_cast<std::size_t>(d)];
      }
    return f;
  }();
  const Vec d_new = data.uDNodal(mesh, t_new);
  const Vec d_old = data.uDNodal(mesh, t_old);

  HeatModel heatEff = model.heat;
  heatEff.M = params.M_trunc;

  State cur;
  cur.k = k;
  if (warm) {
    cur = *warm;
    cur.k = k;
  } else {
    cur.c = prev.c;
    cur.mu = prev.mu;
    cur.z = prev.z;
    cur.theta = prev.theta;
    cur.u = prev.u;
    cur.v = prev.v;
  }

  StepReport rep;
  rep.k = k;
  rep.tau_effective = tau;

  Vec theta_guess = cur.theta;
  bool converged = false;
  HeatSourceTerms src;

  for (int sweep = 0; sweep < params.solver.max_sweeps && !converged; ++sweep) {
    rep.sweeps = sweep + 1;

    CHBlockResult ch =
        solveCHBlock(mesh, model, params, prev, lag, theta_guess, cur.c, cur.mu);
    cur.c = std::move(ch.c);
    cur.mu = std::move(ch.mu);
    rep.newton_ch += ch.newton_iters;

    DamageBlockResult dm =
        solveDamageBlock(mesh, model, params, prev, lag, cur.c, theta_guess, cur.z);
    cur.z = std::move(dm.z);
    rep.pdas_iters += dm.pdas_iters;
    rep.active_upper = dm.active_upper;
    rep.active_lower = dm.active_lower;
    rep.complementarity_gap = dm.complementarity_gap;

    MomentumBlockResult mm = solveMomentumBlock(mesh, model, params, prev, u_prevprev, lag,
                                                cur.c, cur.z, theta_guess, f_nodal, d_new);
    cur.u = std::move(mm.u);
    cur.v = std::move(mm.v);
    rep.newton_mom += mm.newton_iters;

    src = computeHeatSourceTerms(mesh, model, lag.a_qp, lag.m_qp, prev, cur.c, cur.z, cur.u,
                                 cur.mu, g_nodal, tau);
    TemperatureBlockResult tb =
        solveTemperatureBlock(mesh, model, params, prev, src, hload, theta_guess);
    rep.newton_temp += tb.newton_iters;

    // Consolidated residual: how far the already-solved blocks are from the
    // updated temperature.
    double theta_change = 0.0;
    for (int i = 0; i < N; ++i)
      theta_change = std::max(theta_change, std::fabs(tb.theta[static_cast<std::size_t>(i)] -
                                                      theta_guess[static_cast<std::size_t>(i)]));
    cur.theta = std::move(tb.theta);
    theta_guess = cur.theta;
    rep.res_temp = tb.residual;

    // The CH/damage/momentum blocks saw theta_guess; their residual at the
    // consolidated state is bounded by the theta update they missed.
    rep.combined_residual = theta_change;
    if (theta_change <= params.solver.sweep_tol * (1.0 + maxAbs(cur.theta))) converged = true;
  }
  if (!converged)
    throw Error(ErrorCode::StepDivergence,
                "block sweep did not reach the requested tolerance");

  // Constraints certified on acceptance.
  for (int i = 0; i < N; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (cur.z[si] < 0.0 || cur.z[si] > prev.z[si] + 0.0)
      throw Error(ErrorCode::StepDivergence, "damage constraint violated at acceptance");
    if (!(cur.theta[si] > 0.0))
      throw Error(ErrorCode::PositivityLoss, "temperature not positive at acceptance");
  }
  rep.theta_min = *std::min_element(cur.theta.begin(), cur.theta.end());
  rep.theta_max = *std::max_element(cur.theta.begin(), cur.theta.end());

  double mass_new = 0.0, mass_old = 0.0;
  for (int i = 0; i < N; ++i) {
    mass_new += M[static_cast<std::size_t>(i)] * cur.c[static_cast<std::size_t>(i)];
    mass_old += M[static_cast<std::size_t>(i)] * prev.c[static_cast<std::size_t>(i)];
  }
  rep.mass_defect = std::fabs(mass_new - mass_old) / (1.0 + std::fabs(mass_old));

  // Incremental energy inequality for the accepted step.
  Vec theta_trunc(cur.theta.size());
  for (std::size_t i = 0; i < cur.theta.size(); ++i) theta_trunc[i] = evalTM(cur.theta[i], heatEff);
  const EnergyBreakdown Eold = totalEnergy(mesh, model, params.p, params.eps_p, prev.fields());
  const EnergyBreakdown Enew = totalEnergy(mesh, model, params.p, params.eps_p, cur.fields());
  double lhs = Enew.total;
  double rhs = Eold.total;
  if (params.nu != 0.0) {
    lhs += regularizationEnergy(mesh, params.nu, params.varrho, cur.c, cur.z, cur.u, d_new);
    rhs += regularizationEnergy(mesh, params.nu, params.varrho, prev.c, prev.z, prev.u, d_old);
    double chi = 0.0;
    const QpScalar muq = evaluateAtQuadPoints(mesh, cur.mu);
    for (std::size_t kk = 0; kk < muq.value.size(); ++kk) {
      double g2 = 0.0;
      for (int i = 0; i < mesh.dim(); ++i)
        g2 += muq.grad[kk][static_cast<std::size_t>(i)] * muq.grad[kk][static_cast<std::size_t>(i)];
      chi += mesh.quadWeight() * std::pow(std::sqrt(g2), params.varrho);
    }
    for (int i = 0; i < N; ++i)
      chi += M[static_cast<std::size_t>(i)] * cur.mu[static_cast<std::size_t>(i)] *
             cur.mu[static_cast<std::size_t>(i)];
    lhs += params.nu * tau * chi;
  }
  rhs += stepExternalPower(mesh, tau, g_nodal, hload, f_nodal, cur.v);
  rhs += stepBoundaryCompensation(mesh, model, tau, lag.a_qp, cur.c, cur.z, cur.u, cur.v, prev.v,
                                  theta_trunc, f_nodal, d_new, d_old);
  rep.energy_residual = rhs - lhs;
  rep.energy_scale = 1.0 + std::max(std::fabs(lhs), std::fabs(rhs));
  rep.min_split_margin = minSplitMargin(mesh, model, params, prev, cur, lag);

  return {std::move(cur), std::move(rep)};
}

std::pair<State, StepReport> solveStepWithRecovery(const Mesh& mesh, const MaterialModel& model,
                                                   const SchemeParams& params,
                                                   const DataSampler& data, const State& prev,
                                                   const Vec& u_prevprev, int k, double t_old,
                                                   double t_new, int depth) {
  try {
    return solveStepOnce(mesh, model, params, data, prev, u_prevprev, k, t_old, t_new, nullptr);
  } catch (const Error& e) {
    const bool recoverable =
        e.code() == ErrorCode::NewtonDivergence || e.code() == ErrorCode::StepDivergence ||
        e.code() == ErrorCode::PositivityLoss || e.code() == ErrorCode::ActiveSetCycling;
    if (!recoverable) throw;

    // Regularized continuation: solve with (nu, M) active, relax towards the
    // plain scheme, warm-starting each stage.
    if (!params.regularized() && params.continuation.mode != ContinuationParams::Mode::Off) {
      try {
        State warm = prev;
        SchemeParams stage = params;
        double nu = params.continuation.nu0;
        double Mt = params.continuation.M0;
        StepReport rep_last;
        for (int s = 0; s < params.continuation.stages; ++s) {
          stage.nu = nu;
          stage.varrho = params.continuation.varrho;
          stage.M_trunc = Mt;
          auto [st, rp] =
              solveStepOnce(mesh, model, stage, data, prev, u_prevprev, k, t_old, t_new, &warm);
          warm = std::move(st);
          rep_last = rp;
          nu *= params.continuation.nu_factor;
          Mt *= params.continuation.M_factor;
        }
        auto [st, rp] =
            solveStepOnce(mesh, model, params, data, prev, u_prevprev, k, t_old, t_new, &warm);
        rp.used_continuation = true;
        return {std::move(st), std::move(rp)};
      } catch (const Error&) {
        // fall through to sub-stepping
      }
    }

    if (params.solver.allow_substepping && depth < params.solver.max_substep_depth) {
      // Two half steps; the first needs a ghost displacement consistent with
      // the incoming velocity.
      SchemeParams half = params;
      half.tau = 0.5 * params.tau;
      const double t_mid = 0.5 * (t_old + t_new);
      Vec ghost(prev.u.size());
      for (std::size_t i = 0; i < ghost.size(); ++i)
        ghost[i] = prev.u[i] - half.tau * prev.v[i];
      auto [mid, rep1] = solveStepWithRecovery(mesh, model, half, data, prev, ghost, k, t_old,
                                               t_mid, depth + 1);
      auto [fin, rep2] = solveStepWithRecovery(mesh, model, half, data, mid, prev.u, k, t_mid,
                                               t_new, depth + 1);
      fin.k = k;
      fin.v = dTau(fin.u, prev.u, params.tau);
      StepReport rep = rep2;
      rep.k = k;
      rep.substeps = 2 + rep1.substeps + rep2.substeps;
      rep.sweeps += rep1.sweeps;
      rep.tau_effective = half.tau;
      rep.used_continuation = rep1.used_continuation || rep2.used_continuation;
      rep.energy_residual = std::min(rep1.energy_residual, rep2.energy_residual);
      rep.min_split_margin = std::min(rep1.min_split_margin, rep2.min_split_margin);
      rep.mass_defect = rep1.mass_defect + rep2.mass_defect;
      return {std::move(fin), std::move(rep)};
    }

    std::ostringstream os;
    os << "step " << k << " diverged (" << errorCodeName(e.code()) << ": " << e.what() << ")";
    throw Error(ErrorCode::StepDivergence, os.str());
  }
}

}  // namespace

std::pair<State, StepReport> step(const Mesh& mesh, const MaterialModel& model,
                                  const SchemeParams& params, const DataSampler& data,
                                  const State& prev, const Vec& u_prevprev, int k) {
  return solveStepWithRecovery(mesh, model, params, data, prev, u_prevprev, k,
                               (k - 1) * params.tau, k * params.tau, 0);
}

std::pair<State, StepReport> regularizedStep(const Mesh& mesh, const MaterialModel& model,
                                             const SchemeParams& params, const DataSampler& data,
                                             const State& prev, const Vec& u_prevprev, int k) {
  if (params.nu > 0.0 && params.varrho <= 4.0)
    throw Error(ErrorCode::BadArgument, "regularized step needs varrho > 4 when nu > 0");
  return solveStepWithRecovery(mesh, model, params, data, prev, u_prevprev, k,
                               (k - 1) * params.tau, k * params.tau, 0);
}

Trajectory run(const Mesh& mesh, const MaterialModel& model, const SchemeParams& params,
               const DataSampler& data, const InitialData& init) {
  if (!(params.tau > 0.0)) throw Error(ErrorCode::BadArgument, "run: tau must be positive");
  if (params.p <= mesh.dim() && !params.p_override)
    throw Error(ErrorCode::ConfigInvalid,
                "gradient exponent p must exceed the spatial dimension (set the override to "
                "force p <= d)");
  data.validateNonnegative(mesh, params.T);

  Trajectory traj{mesh, model, params, data, {}, {}, {}};
  auto [s0, ghost] = initStates(mesh, model, params, data, init);
  traj.states.push_back(std::move(s0));
  traj.u_ghost = std::move(ghost);

  const int K = static_cast<int>(std::ceil(params.T / params.tau - 1e-12));
  for (int k = 1; k <= K; ++k) {
    const Vec& upp = (k == 1) ? traj.u_ghost : traj.states[static_cast<std::size_t>(k - 2)].u;
    auto [st, rp] = step(mesh, model, params, data, traj.states.back(), upp, k);
    traj.states.push_back(std::move(st));
    traj.reports.push_back(std::move(rp));
  }
  return traj;
}

}  // namespace thermophase
