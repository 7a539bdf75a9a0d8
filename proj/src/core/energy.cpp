#include "energy.hpp"

#include <cmath>

namespace thermophase {

EnergyBreakdown totalEnergy(const Mesh& mesh, const MaterialModel& model, double p, double eps_p,
                            const StateFields& s) {
  EnergyBreakdown e;
  e.grad_c = pGradientEnergy(mesh, *s.c, p, eps_p);
  e.grad_z = pGradientEnergy(mesh, *s.z, p, eps_p);

  const PreparedElastic prep(model.elastic);
  const QpScalar cq = evaluateAtQuadPoints(mesh, *s.c);
  const QpScalar zq = evaluateAtQuadPoints(mesh, *s.z);
  const QpStrain eq = strainAtQuadPoints(mesh, *s.u);
  const int nqp = mesh.quadPointsPerCell();
  for (int c = 0; c < mesh.numCells(); ++c)
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      e.elastic += mesh.quadWeight() *
                   evalWOmegaP(cq.value[k], eq.strain[k], zq.value[k], prep, model.reg);
    }

  const Vec M = lumpedMass(mesh);
  const int dim = mesh.dim();
  for (int i = 0; i < mesh.numNodes(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    e.potential_phi += M[si] * phiOmegaValue((*s.c)[si], model.reg, model.potential);
    e.potential_sigma += M[si] * model.damage.value((*s.z)[si]);
    e.thermal += M[si] * (*s.theta)[si];
    double v2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double vv = (*s.v)[static_cast<std::size_t>(i * dim + d)];
      v2 += vv * vv;
    }
    e.kinetic += 0.5 * M[si] * v2;
  }
  e.total = e.grad_c + e.grad_z + e.elastic + e.potential_phi + e.potential_sigma + e.thermal +
            e.kinetic;
  return e;
}

double regularizationEnergy(const Mesh& mesh, double nu, double varrho, const Vec& c, const Vec& z,
                            const Vec& u, const Vec& d) {
  if (nu == 0.0) return 0.0;
  const Vec M = lumpedMass(mesh);
  double s = 0.0;
  for (int i = 0; i < mesh.numNodes(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    s += M[si] * (std::pow(std::fabs(c[si]), varrho) + std::pow(std::fabs(z[si]), varrho));
  }
  Vec w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) w[i] = u[i] - d[i];
  const QpStrain eq = strainAtQuadPoints(mesh, w);
  for (std::size_t k = 0; k < eq.strain.size(); ++k)
    s += mesh.quadWeight() * std::pow(eq.strain[k].norm(), varrho);
  return nu / varrho * s;
}

double stepExternalPower(const Mesh& mesh, double tau, const Vec& g_nodal, const Vec& hload,
                         const Vec& f_nodal, const Vec& v_new) {
  const Vec M = lumpedMass(mesh);
  const int dim = mesh.dim();
  double s = 0.0;
  for (int i = 0; i < mesh.numNodes(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    s += M[si] * g_nodal[si];
    for (int d = 0; d < dim; ++d)
      s += M[si] * f_nodal[static_cast<std::size_t>(i * dim + d)] *
           v_new[static_cast<std::size_t>(i * dim + d)];
  }
  for (double hv : hload) s += hv;
  return tau * s;
}

double stepBoundaryCompensation(const Mesh& mesh, const MaterialModel& model, double tau,
                                const Vec& a_qp, const Vec& c_new, const Vec& z_new,
                                const Vec& u_new, const Vec& v_new, const Vec& v_old,
                                const Vec& theta_for_pressure, const Vec& f_nodal,
                                const Vec& d_new, const Vec& d_old) {
  const int dim = mesh.dim();
  const int nqp = mesh.quadPointsPerCell();
  const Vec M = lumpedMass(mesh);
  const IsotropicTensor V = model.elastic.viscosity();
  const PreparedElastic prep(model.elastic);

  Vec d_rate(d_new.size());
  for (std::size_t i = 0; i < d_new.size(); ++i) d_rate[i] = (d_new[i] - d_old[i]) / tau;

  double s = 0.0;
  // int D_k(v) . D_k(d) and - int f . D_k(d), lumped
  for (int i = 0; i < mesh.numNodes(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    for (int d = 0; d < dim; ++d) {
      const std::size_t di = static_cast<std::size_t>(i * dim + d);
      s += M[si] * (v_new[di] - v_old[di]) / tau * d_rate[di];
      s -= M[si] * f_nodal[di] * d_rate[di];
    }
  }

  // quadrature terms
  const QpStrain ev = strainAtQuadPoints(mesh, v_new);
  const QpStrain edr = strainAtQuadPoints(mesh, d_rate);
  const QpScalar cq = evaluateAtQuadPoints(mesh, c_new);
  const QpScalar zq = evaluateAtQuadPoints(mesh, z_new);
  const QpStrain eu = strainAtQuadPoints(mesh, u_new);
  const QpScalar tq = evaluateAtQuadPoints(mesh, theta_for_pressure);
  const double rho = model.heat.rho;
  for (int c = 0; c < mesh.numCells(); ++c)
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      double term = a_qp[k] * V.apply(ev.strain[k]).ddot(edr.strain[k]);
      const SymTensor stress =
          evalWOmegaDerivativesP(cq.value[k], eu.strain[k], zq.value[k], prep, model.reg).Weps;
      term += stress.ddot(edr.strain[k]);
      term -= rho * tq.value[k] * edr.div[k];
      s += mesh.quadWeight() * term;
    }
  return tau * s;
}

}  // namespace thermophase
