#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>

#include "error.hpp"
#include "poly.hpp"
#include "tensor.hpp"

namespace thermophase {

/// Mixing potential phi = betaHat + gamma for the concentration variable.
/// betaHat is the proper convex l.s.c. part (quartic well or an indicator of
/// [c_lo, c_hi]); gamma is a smooth quadratic perturbation with
/// gamma'' <= lambda_gamma.
struct ConcentrationPotential {
  enum class Kind { Polynomial, Indicator };

  Kind kind = Kind::Polynomial;
  double c_lo = -1.0;  // indicator bounds
  double c_hi = 1.0;
  Poly1 gamma{0.0};
  Poly1 gamma_d{0.0};  // cached derivative; call refreshDerived() after edits
  double lambda_gamma = 0.0;

  void refreshDerived() { gamma_d = gamma.derivative(); }

  /// phi(c) = (c^2-1)^2/4, the classical double well, split as
  /// betaHat = c^4/4 and gamma = 1/4 - c^2/2 (gamma concave, lambda = 0).
  static ConcentrationPotential doubleWell() {
    ConcentrationPotential p;
    p.kind = Kind::Polynomial;
    p.gamma = Poly1{0.25, 0.0, -0.5};
    p.lambda_gamma = 0.0;
    p.refreshDerived();
    return p;
  }

  static ConcentrationPotential indicator(double lo, double hi) {
    ConcentrationPotential p;
    p.kind = Kind::Indicator;
    p.c_lo = lo;
    p.c_hi = hi;
    p.gamma = Poly1{0.0};
    p.lambda_gamma = 0.0;
    p.refreshDerived();
    return p;
  }

  double gammaValue(double c) const { return gamma.eval(c); }
  double gammaPrime(double c) const { return gamma_d.eval(c); }
};

/// Isotropic elasticity with damage/concentration dependent stiffness factor
/// b(c,z), eigenstrain eps*(c) = alpha_star c I and viscosity V = factor * C.
struct ElasticModel {
  double lame_lambda = 1.0;
  double lame_mu = 1.0;
  double viscosity_factor = 1.0;
  Poly2 b_model = Poly2::zSquared();
  double b0 = 1.0;  // upper bound of b on the admissible range
  double eigenstrain_coeff = 0.0;
  Poly2 a_model = Poly2::constant(1.0);
  double a0 = 1.0;  // lower bound of a
  double a1 = 1.0;  // upper bound of a
  double a2 = 0.0;  // bound on |a_c| + |a_z|

  IsotropicTensor stiffness() const { return {lame_lambda, lame_mu}; }
  IsotropicTensor viscosity() const {
    return {viscosity_factor * lame_lambda, viscosity_factor * lame_mu};
  }

  double b(double c, double z) const { return b_model.eval(c, z); }
  double bC(double c, double z) const { return b_model.dC().eval(c, z); }
  double bZ(double c, double z) const { return b_model.dZ().eval(c, z); }
  double bCC(double c, double z) const { return b_model.dC().dC().eval(c, z); }
  double bZZ(double c, double z) const { return b_model.dZ().dZ().eval(c, z); }

  SymTensor eigenstrain(int dim, double c) const {
    SymTensor t = SymTensor::identity(dim);
    t *= eigenstrain_coeff * c;
    return t;
  }
};

/// Heat conductivity K(theta) = c0 (1 + theta^kappa) with kappa > 1, thermal
/// expansion rho, and the truncation level M for K_M / T_M (infinity = off).
struct HeatModel {
  double c0 = 1.0;
  double c1 = 1.0;
  double kappa = 2.0;
  double rho = 1.0;
  double M = std::numeric_limits<double>::infinity();

  bool truncationOff() const { return !std::isfinite(M); }
};

/// Smooth potential sigma(z) for the damage variable, with the canonical
/// convex-concave split sigma = sigmaConv + sigmaConc where
/// sigmaConv(z) = sigma(z) + L z^2/2 and sigmaConc(z) = -L z^2/2,
/// L = max_{[0,1]} |sigma''|.
struct DamagePotential {
  Poly1 sigma{0.0};
  Poly1 sigma_d{0.0};
  Poly1 sigma_dd{0.0};
  double L = 0.0;

  void refreshDerived() {
    sigma_d = sigma.derivative();
    sigma_dd = sigma_d.derivative();
    L = sigma_dd.range({0.0, 1.0}).absMax();
  }

  static DamagePotential linear(double alpha_sigma) {
    DamagePotential d;
    d.sigma = Poly1{alpha_sigma, -alpha_sigma};  // alpha_sigma * (1 - z)
    d.refreshDerived();
    return d;
  }

  static DamagePotential fromPoly(Poly1 p) {
    DamagePotential d;
    d.sigma = std::move(p);
    d.refreshDerived();
    return d;
  }

  double value(double z) const { return sigma.eval(z); }
  double prime(double z) const { return sigma_d.eval(z); }
  double doublePrime(double z) const { return sigma_dd.eval(z); }
  double convPrime(double z) const { return prime(z) + L * z; }
  double concPrime(double z) const { return -L * z; }
  double convValue(double z) const { return value(z) + 0.5 * L * z * z; }
  double concValue(double z) const { return -0.5 * L * z * z; }
};

/// Yosida index and the smoothed truncation R used to compose the elastic
/// density: R(c) = c on (-M_R, M_R), C^2 blend to a constant outside
/// (-M_R-1, M_R+1). |R| <= M_R + 1/2, R' in [0,1], |R''| <= 3/2.
struct RegularizationParams {
  double omega_reg = 0.1;
  double trunc_halfwidth = 10.0;  // M_R
};

struct TruncationEval {
  double value;
  double d1;
  double d2;
};

TruncationEval smoothTruncation(double c, const RegularizationParams& reg);

/// Scalar Yosida regularization beta_omega of the subdifferential of betaHat.
double yosida(double c, const RegularizationParams& reg, const ConcentrationPotential& pot);

/// Resolvent r solving r + omega * beta(r) = c.
double yosidaResolvent(double c, const RegularizationParams& reg, const ConcentrationPotential& pot);

/// Moreau-Yosida envelope value betaHat_omega(c).
double yosidaPrimitive(double c, const RegularizationParams& reg, const ConcentrationPotential& pot);

/// phi_omega(c) = betaHat_omega(c) + gamma(c).
double phiOmegaValue(double c, const RegularizationParams& reg, const ConcentrationPotential& pot);

/// Convex(new) + concave(old) drive for phi_omega:
/// beta_omega(c_new) + lambda c_new + gamma'(c_old) - lambda c_old.
double phiSplittingDrive(double c_new, double c_old, const RegularizationParams& reg,
                         const ConcentrationPotential& pot);

/// Precomputed derivative polynomials of the stiffness factor b(c,z); build
/// once per assembly loop, the per-point evaluations are then allocation-free.
struct PreparedElastic {
  const ElasticModel* model;
  Poly2 bc, bz, bcc, bzz;

  explicit PreparedElastic(const ElasticModel& m)
      : model(&m), bc(m.b_model.dC()), bz(m.b_model.dZ()), bcc(m.b_model.dC().dC()),
        bzz(m.b_model.dZ().dZ()) {}
};

/// All first and second partials of the elastic density
/// W(c,eps,z) = 1/2 b(c,z) C(eps - eps*(c)) : (eps - eps*(c)).
struct WDerivatives {
  double W = 0.0;
  double Wc = 0.0;
  double Wz = 0.0;
  SymTensor Weps;
  double Wcc = 0.0;
  double Wzz = 0.0;
  SymTensor Wepsc;
  SymTensor Wepsz;
};

double evalW(double c, const SymTensor& eps, double z, const ElasticModel& model);
WDerivatives evalWDerivatives(double c, const SymTensor& eps, double z, const ElasticModel& model);
WDerivatives evalWDerivativesP(double c, const SymTensor& eps, double z,
                               const PreparedElastic& prep);

/// Omega-regularized density W^omega(c,eps,z) = W(R(c),eps,z) and its partials.
double evalWOmega(double c, const SymTensor& eps, double z, const ElasticModel& model,
                  const RegularizationParams& reg);
double evalWOmegaP(double c, const SymTensor& eps, double z, const PreparedElastic& prep,
                   const RegularizationParams& reg);
WDerivatives evalWOmegaDerivatives(double c, const SymTensor& eps, double z,
                                   const ElasticModel& model, const RegularizationParams& reg);
WDerivatives evalWOmegaDerivativesP(double c, const SymTensor& eps, double z,
                                    const PreparedElastic& prep, const RegularizationParams& reg);

/// Upper bound for sup_c |W^omega_cc(c, eps, z)| (coefficient of the c-split).
double splittingBoundC(const SymTensor& eps, double z, const ElasticModel& model,
                       const RegularizationParams& reg);
double splittingBoundCP(const SymTensor& eps, double z, const PreparedElastic& prep,
                        const RegularizationParams& reg);

/// Upper bound for sup_{z in [0,1]} |W^omega_zz(c, eps, z)| (z-split coefficient).
double splittingBoundZ(double c, const SymTensor& eps, const ElasticModel& model,
                       const RegularizationParams& reg);
double splittingBoundZP(double c, const SymTensor& eps, const PreparedElastic& prep,
                        const RegularizationParams& reg);

struct WSplittingDrives {
  double drive_c = 0.0;   // convex(new)+concave(old) c-drive at (eps_old, z_old)
  double drive_z = 0.0;   // convex(new)+concave(old) z-drive at (c_new, eps_old)
  SymTensor stress;       // W^omega_eps at the fully updated state
};

WSplittingDrives wSplittingDrives(double c_new, double c_old, double z_new, double z_old,
                                  const SymTensor& eps_old, const SymTensor& eps_new,
                                  const ElasticModel& model, const RegularizationParams& reg);

double evalK(double theta, const HeatModel& heat);
double evalKPrime(double theta, const HeatModel& heat);
double evalKM(double r, const HeatModel& heat);
double evalKMPrime(double r, const HeatModel& heat);
double evalTM(double r, const HeatModel& heat);
double evalTMPrime(double r, const HeatModel& heat);

/// Everything the scheme needs about the medium.
struct MaterialModel {
  ConcentrationPotential potential;
  ElasticModel elastic;
  HeatModel heat;
  DamagePotential damage = DamagePotential::linear(0.0);
  RegularizationParams reg;
  Poly2 mobility = Poly2::constant(1.0);
  double m0 = 1.0;

  double mobilityAt(double c, double z) const;
  double viscosityCoeffAt(double c, double z) const;
};

/// Evaluation counters for asserting that lagged coefficients are evaluated
/// once per step (debug instrumentation used by tests).
struct CoefficientCounters {
  static std::atomic<long> mobility;
  static std::atomic<long> viscosity;
  static void reset();
};

}  // namespace thermophase
