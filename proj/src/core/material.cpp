#include "material.hpp"

#include <algorithm>

namespace thermophase {

std::atomic<long> CoefficientCounters::mobility{0};
std::atomic<long> CoefficientCounters::viscosity{0};

void CoefficientCounters::reset() {
  mobility = 0;
  viscosity = 0;
}

double MaterialModel::mobilityAt(double c, double z) const {
  CoefficientCounters::mobility.fetch_add(1, std::memory_order_relaxed);
  return mobility.eval(c, z);
}

double MaterialModel::viscosityCoeffAt(double c, double z) const {
  CoefficientCounters::viscosity.fetch_add(1, std::memory_order_relaxed);
  return elastic.a_model.eval(c, z);
}

// Quintic-free C^2 blend: q(s) = s - s^3 + s^4/2 on [0,1] has
// q(0)=0, q'(0)=1, q''(0)=0, q'(1)=0, q''(1)=0, q' >= 0, |q''| <= 3/2.
TruncationEval smoothTruncation(double c, const RegularizationParams& reg) {
  const double m0 = reg.trunc_halfwidth;
  const double ac = std::fabs(c);
  if (ac <= m0) return {c, 1.0, 0.0};
  const double sign = c >= 0 ? 1.0 : -1.0;
  if (ac >= m0 + 1.0) return {sign * (m0 + 0.5), 0.0, 0.0};
  const double s = ac - m0;
  const double q = s - s * s * s + 0.5 * s * s * s * s;
  const double q1 = 1.0 - 3.0 * s * s + 2.0 * s * s * s;
  const double q2 = -6.0 * s + 6.0 * s * s;
  return {sign * (m0 + q), q1, sign * q2};
}

double yosidaResolvent(double c, const RegularizationParams& reg,
                       const ConcentrationPotential& pot) {
  if (reg.omega_reg <= 0.0)
    throw Error(ErrorCode::BadArgument, "yosida: regularization index must be positive");
  if (pot.kind == ConcentrationPotential::Kind::Indicator)
    return std::clamp(c, pot.c_lo, pot.c_hi);

  // r + omega r^3 = c: strictly monotone, root bracketed by 0 and c.
  const double w = reg.omega_reg;
  double lo = std::min(0.0, c), hi = std::max(0.0, c);
  double r = c / (1.0 + w * c * c);
  const double tol = 1e-14 * (1.0 + std::fabs(c));
  for (int it = 0; it < 200; ++it) {
    const double g = r + w * r * r * r - c;
    if (std::fabs(g) <= tol) return r;
    if (g > 0)
      hi = r;
    else
      lo = r;
    const double dg = 1.0 + 3.0 * w * r * r;
    double step = r - g / dg;
    if (step <= lo || step >= hi) step = 0.5 * (lo + hi);
    r = step;
  }
  throw Error(ErrorCode::ResolventDivergence, "yosida: cubic resolvent iteration stalled");
}

double yosida(double c, const RegularizationParams& reg, const ConcentrationPotential& pot) {
  const double r = yosidaResolvent(c, reg, pot);
  return (c - r) / reg.omega_reg;
}

double yosidaPrimitive(double c, const RegularizationParams& reg,
                       const ConcentrationPotential& pot) {
  const double r = yosidaResolvent(c, reg, pot);
  const double dist = c - r;
  double base = 0.0;
  if (pot.kind == ConcentrationPotential::Kind::Polynomial) base = 0.25 * r * r * r * r;
  return base + 0.5 * dist * dist / reg.omega_reg;
}

double phiOmegaValue(double c, const RegularizationParams& reg,
                     const ConcentrationPotential& pot) {
  return yosidaPrimitive(c, reg, pot) + pot.gammaValue(c);
}

double phiSplittingDrive(double c_new, double c_old, const RegularizationParams& reg,
                         const ConcentrationPotential& pot) {
  return yosida(c_new, reg, pot) + pot.lambda_gamma * c_new + pot.gammaPrime(c_old) -
         pot.lambda_gamma * c_old;
}

double evalW(double c, const SymTensor& eps, double z, const ElasticModel& model) {
  const SymTensor e = eps - model.eigenstrain(eps.dim, c);
  return 0.5 * model.b(c, z) * model.stiffness().apply(e).ddot(e);
}

WDerivatives evalWDerivatives(double c, const SymTensor& eps, double z,
                              const ElasticModel& model) {
  return evalWDerivativesP(c, eps, z, PreparedElastic(model));
}

WDerivatives evalWDerivativesP(double c, const SymTensor& eps, double z,
                               const PreparedElastic& prep) {
  const ElasticModel& model = *prep.model;
  WDerivatives d;
  const int dim = eps.dim;
  const IsotropicTensor C = model.stiffness();
  const double as = model.eigenstrain_coeff;
  const SymTensor e = eps - model.eigenstrain(dim, c);
  const SymTensor Ce = C.apply(e);
  const double q = Ce.ddot(e);          // C e : e
  const double trCe = Ce.trace();       // I : C e
  const double eta = C.traceContraction(dim);  // I : C I

  const double b = model.b_model.eval(c, z);
  const double bc = prep.bc.eval(c, z);
  const double bz = prep.bz.eval(c, z);
  const double bcc = prep.bcc.eval(c, z);
  const double bzz = prep.bzz.eval(c, z);

  d.W = 0.5 * b * q;
  d.Wc = 0.5 * bc * q - b * as * trCe;
  d.Wz = 0.5 * bz * q;
  d.Weps = b * Ce;
  // eps*(c) is linear in c, so the (eps*)'' contribution drops out.
  d.Wcc = 0.5 * bcc * q - 2.0 * bc * as * trCe + b * as * as * eta;
  d.Wzz = 0.5 * bzz * q;
  d.Wepsc = bc * Ce;
  SymTensor CI = C.apply(SymTensor::identity(dim));
  d.Wepsc -= (b * as) * CI;
  d.Wepsz = bz * Ce;
  return d;
}

double evalWOmega(double c, const SymTensor& eps, double z, const ElasticModel& model,
                  const RegularizationParams& reg) {
  return evalW(smoothTruncation(c, reg).value, eps, z, model);
}

double evalWOmegaP(double c, const SymTensor& eps, double z, const PreparedElastic& prep,
                   const RegularizationParams& reg) {
  const double rc = smoothTruncation(c, reg).value;
  const SymTensor e = eps - prep.model->eigenstrain(eps.dim, rc);
  return 0.5 * prep.model->b_model.eval(rc, z) * prep.model->stiffness().apply(e).ddot(e);
}

WDerivatives evalWOmegaDerivatives(double c, const SymTensor& eps, double z,
                                   const ElasticModel& model, const RegularizationParams& reg) {
  return evalWOmegaDerivativesP(c, eps, z, PreparedElastic(model), reg);
}

WDerivatives evalWOmegaDerivativesP(double c, const SymTensor& eps, double z,
                                    const PreparedElastic& prep, const RegularizationParams& reg) {
  const TruncationEval R = smoothTruncation(c, reg);
  WDerivatives inner = evalWDerivativesP(R.value, eps, z, prep);
  WDerivatives d = inner;
  d.Wc = inner.Wc * R.d1;
  d.Wcc = inner.Wcc * R.d1 * R.d1 + inner.Wc * R.d2;
  d.Wepsc = R.d1 * inner.Wepsc;
  return d;
}

namespace {

struct SplitScalars {
  double q0;    // C eps : eps
  double t;     // I : C eps = kappa_d tr(eps)
  double eta;   // I : C I
};

SplitScalars splitScalars(const SymTensor& eps, const ElasticModel& model) {
  const IsotropicTensor C = model.stiffness();
  SplitScalars s;
  s.q0 = C.quadratic(eps);
  s.t = C.apply(eps).trace();
  s.eta = C.traceContraction(eps.dim);
  return s;
}

}  // namespace

double splittingBoundCP(const SymTensor& eps, double z, const PreparedElastic& prep,
                        const RegularizationParams& reg) {
  const ElasticModel& model = *prep.model;
  const double as = model.eigenstrain_coeff;
  const double S = reg.trunc_halfwidth + 0.5;  // |R| <= S
  const SplitScalars sc = splitScalars(eps, model);
  const Interval cr{-S, S};
  const Interval zi = Interval::point(z);

  // Ce:e, I:Ce as interval functions of the truncated concentration.
  const Interval q = Interval::point(sc.q0) + cr * (-2.0 * as * sc.t) +
                     (cr * cr) * (as * as * sc.eta);
  const Interval trCe = Interval::point(sc.t) + cr * (-as * sc.eta);

  const Interval b = model.b_model.range(cr, zi);
  const Interval bc = prep.bc.range(cr, zi);
  const Interval bcc = prep.bcc.range(cr, zi);

  const Interval Wc = b * (-as) * trCe + bc * q * 0.5;
  const Interval Wcc = bcc * q * 0.5 + bc * trCe * (-2.0 * as) + b * (as * as * sc.eta);

  // |W^omega_cc| <= |W_cc| |R'|^2 + |W_c| |R''| with R' in [0,1], |R''| <= 3/2.
  return Wcc.absMax() + 1.5 * Wc.absMax();
}

double splittingBoundC(const SymTensor& eps, double z, const ElasticModel& model,
                       const RegularizationParams& reg) {
  return splittingBoundCP(eps, z, PreparedElastic(model), reg);
}

double splittingBoundZP(double c, const SymTensor& eps, const PreparedElastic& prep,
                        const RegularizationParams& reg) {
  const double rc = smoothTruncation(c, reg).value;
  const SymTensor e = eps - prep.model->eigenstrain(eps.dim, rc);
  const double q = prep.model->stiffness().quadratic(e);
  const Interval bzz = prep.bzz.range(Interval::point(rc), {0.0, 1.0});
  return 0.5 * bzz.absMax() * q;
}

double splittingBoundZ(double c, const SymTensor& eps, const ElasticModel& model,
                       const RegularizationParams& reg) {
  return splittingBoundZP(c, eps, PreparedElastic(model), reg);
}

WSplittingDrives wSplittingDrives(double c_new, double c_old, double z_new, double z_old,
                                  const SymTensor& eps_old, const SymTensor& eps_new,
                                  const ElasticModel& model, const RegularizationParams& reg) {
  const PreparedElastic prep(model);
  WSplittingDrives out;
  const WDerivatives dc = evalWOmegaDerivativesP(c_new, eps_old, z_old, prep, reg);
  out.drive_c = dc.Wc + splittingBoundCP(eps_old, z_old, prep, reg) * (c_new - c_old);
  const WDerivatives dz = evalWOmegaDerivativesP(c_new, eps_old, z_new, prep, reg);
  out.drive_z = dz.Wz + splittingBoundZP(c_new, eps_old, prep, reg) * (z_new - z_old);
  out.stress = evalWOmegaDerivativesP(c_new, eps_new, z_new, prep, reg).Weps;
  return out;
}

double evalK(double theta, const HeatModel& heat) {
  return heat.c0 * (1.0 + std::pow(std::max(theta, 0.0), heat.kappa));
}

double evalKPrime(double theta, const HeatModel& heat) {
  if (theta <= 0.0) return 0.0;
  return heat.c0 * heat.kappa * std::pow(theta, heat.kappa - 1.0);
}

double evalKM(double r, const HeatModel& heat) {
  if (r < 0.0) return evalK(0.0, heat);
  if (r > heat.M) return evalK(heat.M, heat);
  return evalK(r, heat);
}

double evalKMPrime(double r, const HeatModel& heat) {
  if (r < 0.0 || r > heat.M) return 0.0;
  return evalKPrime(r, heat);
}

double evalTM(double r, const HeatModel& heat) {
  if (r < 0.0) return 0.0;
  if (r > heat.M) return heat.M;
  return r;
}

double evalTMPrime(double r, const HeatModel& heat) {
  return (r < 0.0 || r > heat.M) ? 0.0 : 1.0;
}

}  // namespace thermophase
