#pragma once

#include "data.hpp"
#include "grid.hpp"
#include "material.hpp"

namespace thermophase {

/// Per-term decomposition of the total energy
///   E = int 1/p|grad c|^p + 1/p|grad z|^p + W + phi_omega(c) + sigma(z)
///       + theta dx + 1/2 int |v|^2 dx.
/// Gradient and elastic terms use cell quadrature, the pointwise terms the
/// lumped (nodal) rule, matching the assembly of the scheme term for term.
struct EnergyBreakdown {
  double grad_c = 0.0;
  double grad_z = 0.0;
  double elastic = 0.0;
  double potential_phi = 0.0;
  double potential_sigma = 0.0;
  double thermal = 0.0;
  double kinetic = 0.0;
  double total = 0.0;
};

struct StateFields {
  const Vec* c;
  const Vec* mu;
  const Vec* z;
  const Vec* theta;
  const Vec* u;
  const Vec* v;
};

EnergyBreakdown totalEnergy(const Mesh& mesh, const MaterialModel& model, double p, double eps_p,
                            const StateFields& s);

/// nu-regularization contributions to the incremental energy balance:
/// (nu/varrho)(|c|_varrho^varrho + |z|_varrho^varrho + |eps(u-d)|_varrho^varrho).
double regularizationEnergy(const Mesh& mesh, double nu, double varrho, const Vec& c, const Vec& z,
                            const Vec& u, const Vec& d);

/// One-step external power tau*(int g + bdry int h + int f . v_new).
double stepExternalPower(const Mesh& mesh, double tau, const Vec& g_nodal, const Vec& hload,
                         const Vec& f_nodal, const Vec& v_new);

/// The Dirichlet compensation terms of the incremental energy inequality:
/// tau * ( int Dv . Dd + int a V eps(v): eps(Dd) + int W_eps : eps(Dd)
///         - rho int Theta div(Dd) - int f . Dd ).
double stepBoundaryCompensation(const Mesh& mesh, const MaterialModel& model, double tau,
                                const Vec& a_qp, const Vec& c_new, const Vec& z_new,
                                const Vec& u_new, const Vec& v_new, const Vec& v_old,
                                const Vec& theta_for_pressure, const Vec& f_nodal,
                                const Vec& d_new, const Vec& d_old);

struct IncrementalEnergyCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // rhs - lhs, nonnegative up to solver tolerance
  double scale = 1.0;
};

}  // namespace thermophase
