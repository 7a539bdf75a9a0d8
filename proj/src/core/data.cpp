#include "data.hpp"

#include <cmath>

namespace thermophase {

namespace {

double gaussSpace(const SpaceTimeField& f, const std::array<double, 3>& x) {
  double r2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = x[static_cast<std::size_t>(i)] - f.center[static_cast<std::size_t>(i)];
    r2 += d * d;
  }
  return f.amp * std::exp(-r2 / (f.width * f.width));
}

double timeProfile(const SpaceTimeField& f, double t) {
  return std::isfinite(f.t_decay) ? std::exp(-t / f.t_decay) : 1.0;
}

double timeProfileMean(const SpaceTimeField& f, double t0, double t1) {
  if (!std::isfinite(f.t_decay)) return 1.0;
  const double td = f.t_decay;
  return td * (std::exp(-t0 / td) - std::exp(-t1 / td)) / (t1 - t0);
}

// 5-point Gauss-Legendre on (t0, t1) for custom closures.
template <typename F>
double gaussTimeMean(F&& fn, double t0, double t1) {
  static const double xi[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                               0.5384693101056831, 0.9061798459386640};
  static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                              0.4786286704993665, 0.2369268850561891};
  const double mid = 0.5 * (t0 + t1), half = 0.5 * (t1 - t0);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += w[i] * fn(mid + half * xi[i]);
  return 0.5 * s;  // divided by interval length
}

}  // namespace

double SpaceTimeField::scalarAt(const std::array<double, 3>& x, double t) const {
  switch (kind) {
    case Kind::Zero: return 0.0;
    case Kind::Constant: return value;
    case Kind::LinearInT: return value + slope * t;
    case Kind::GaussianPulse: return gaussSpace(*this, x) * timeProfile(*this, t);
    case Kind::Custom: return custom_scalar ? custom_scalar(x, t) : 0.0;
    default: return 0.0;
  }
}

std::array<double, 3> SpaceTimeField::vectorAt(const std::array<double, 3>& x, double t) const {
  switch (kind) {
    case Kind::RampUniaxial: return {t * rate * x[0], 0.0, 0.0};
    case Kind::RampShear: return {t * rate * x[1], 0.0, 0.0};
    case Kind::Constant: return {value, 0.0, 0.0};
    case Kind::LinearInT: return {value + slope * t, 0.0, 0.0};
    case Kind::Custom:
      if (custom_vector) return custom_vector(x, t);
      return {0.0, 0.0, 0.0};
    default: return {0.0, 0.0, 0.0};
  }
}

double SpaceTimeField::scalarMean(const std::array<double, 3>& x, double t0, double t1) const {
  switch (kind) {
    case Kind::Zero: return 0.0;
    case Kind::Constant: return value;
    case Kind::LinearInT: return value + slope * 0.5 * (t0 + t1);
    case Kind::GaussianPulse: return gaussSpace(*this, x) * timeProfileMean(*this, t0, t1);
    case Kind::Custom:
      return gaussTimeMean([&](double t) { return custom_scalar ? custom_scalar(x, t) : 0.0; },
                           t0, t1);
    default: return 0.0;
  }
}

std::array<double, 3> SpaceTimeField::vectorMean(const std::array<double, 3>& x, double t0,
                                                 double t1) const {
  switch (kind) {
    case Kind::RampUniaxial: return {0.5 * (t0 + t1) * rate * x[0], 0.0, 0.0};
    case Kind::RampShear: return {0.5 * (t0 + t1) * rate * x[1], 0.0, 0.0};
    case Kind::Constant: return {value, 0.0, 0.0};
    case Kind::LinearInT: return {value + slope * 0.5 * (t0 + t1), 0.0, 0.0};
    case Kind::Custom: {
      std::array<double, 3> out{0.0, 0.0, 0.0};
      for (int i = 0; i < 3; ++i)
        out[static_cast<std::size_t>(i)] = gaussTimeMean(
            [&](double t) {
              return custom_vector ? custom_vector(x, t)[static_cast<std::size_t>(i)] : 0.0;
            },
            t0, t1);
      return out;
    }
    default: return {0.0, 0.0, 0.0};
  }
}

Vec DataSampler::gNodalMean(const Mesh& mesh, int k, double tau) const {
  Vec out(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  if (g_.isZero()) return out;
  const double t0 = (k - 1) * tau, t1 = k * tau;
  for (int n = 0; n < mesh.numNodes(); ++n)
    out[static_cast<std::size_t>(n)] = g_.scalarMean(mesh.nodeCoords(n), t0, t1);
  return out;
}

Vec DataSampler::hNodalMean(const Mesh& mesh, int k, double tau) const {
  Vec out(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  if (h_.isZero()) return out;
  const double t0 = (k - 1) * tau, t1 = k * tau;
  for (int n : mesh.boundaryNodes())
    out[static_cast<std::size_t>(n)] = h_.scalarMean(mesh.nodeCoords(n), t0, t1);
  return out;
}

Vec DataSampler::fNodalMean(const Mesh& mesh, int k, double tau) const {
  const int dim = mesh.dim();
  Vec out(static_cast<std::size_t>(mesh.numNodes() * dim), 0.0);
  if (f_.isZero()) return out;
  const double t0 = (k - 1) * tau, t1 = k * tau;
  for (int n = 0; n < mesh.numNodes(); ++n) {
    const auto v = f_.vectorMean(mesh.nodeCoords(n), t0, t1);
    for (int i = 0; i < dim; ++i)
      out[static_cast<std::size_t>(n * dim + i)] = v[static_cast<std::size_t>(i)];
  }
  return out;
}

Vec DataSampler::uDNodal(const Mesh& mesh, double t) const {
  const int dim = mesh.dim();
  Vec out(static_cast<std::size_t>(mesh.numNodes() * dim), 0.0);
  if (uD_.isZero()) return out;
  for (int n = 0; n < mesh.numNodes(); ++n) {
    const auto v = uD_.vectorAt(mesh.nodeCoords(n), t);
    for (int i = 0; i < dim; ++i)
      out[static_cast<std::size_t>(n * dim + i)] = v[static_cast<std::size_t>(i)];
  }
  return out;
}

void DataSampler::validateNonnegative(const Mesh& mesh, double T) const {
  const int nt = 7;
  for (int it = 0; it <= nt; ++it) {
    const double t = T * it / nt;
    for (int n = 0; n < mesh.numNodes(); ++n) {
      if (g_.scalarAt(mesh.nodeCoords(n), t) < 0.0)
        throw Error(ErrorCode::ConfigInvalid, "heat source g must be nonnegative");
      if (h_.scalarAt(mesh.nodeCoords(n), t) < 0.0)
        throw Error(ErrorCode::NegativeBoundarySource,
                    "boundary heat source h must be nonnegative");
    }
  }
}

}  // namespace thermophase
