#pragma once

#include <array>
#include <functional>
#include <limits>
#include <string>

#include "grid.hpp"

namespace thermophase {

/// Closed-form space-time field from a small catalogue, plus a custom-closure
/// escape hatch for manufactured-solution studies. Scalar fields (g, h) carry
/// analytic local time means; vector fields serve f and the Dirichlet datum.
struct SpaceTimeField {
  enum class Kind { Zero, Constant, LinearInT, GaussianPulse, RampUniaxial, RampShear, Custom };

  Kind kind = Kind::Zero;
  double value = 0.0;          // Constant / LinearInT offset
  double slope = 0.0;          // LinearInT slope
  double amp = 0.0;            // GaussianPulse amplitude
  std::array<double, 3> center{0.5, 0.5, 0.5};
  double width = 0.25;
  double t_decay = std::numeric_limits<double>::infinity();
  double rate = 0.0;           // ramp rate for Dirichlet ramps
  std::function<double(const std::array<double, 3>&, double)> custom_scalar;
  std::function<std::array<double, 3>(const std::array<double, 3>&, double)> custom_vector;

  static SpaceTimeField zero() { return {}; }
  static SpaceTimeField constant(double v) {
    SpaceTimeField f;
    f.kind = Kind::Constant;
    f.value = v;
    return f;
  }
  static SpaceTimeField linearInT(double v0, double s) {
    SpaceTimeField f;
    f.kind = Kind::LinearInT;
    f.value = v0;
    f.slope = s;
    return f;
  }
  static SpaceTimeField gaussianPulse(double amp, std::array<double, 3> center, double width,
                                      double t_decay) {
    SpaceTimeField f;
    f.kind = Kind::GaussianPulse;
    f.amp = amp;
    f.center = center;
    f.width = width;
    f.t_decay = t_decay;
    return f;
  }
  /// d(x,t) = t * rate * (x_1, 0, 0)
  static SpaceTimeField rampUniaxial(double rate) {
    SpaceTimeField f;
    f.kind = Kind::RampUniaxial;
    f.rate = rate;
    return f;
  }
  /// d(x,t) = t * rate * (x_2, 0, 0)
  static SpaceTimeField rampShear(double rate) {
    SpaceTimeField f;
    f.kind = Kind::RampShear;
    f.rate = rate;
    return f;
  }
  static SpaceTimeField customScalar(std::function<double(const std::array<double, 3>&, double)> fn) {
    SpaceTimeField f;
    f.kind = Kind::Custom;
    f.custom_scalar = std::move(fn);
    return f;
  }
  static SpaceTimeField customVector(
      std::function<std::array<double, 3>(const std::array<double, 3>&, double)> fn) {
    SpaceTimeField f;
    f.kind = Kind::Custom;
    f.custom_vector = std::move(fn);
    return f;
  }

  double scalarAt(const std::array<double, 3>& x, double t) const;
  std::array<double, 3> vectorAt(const std::array<double, 3>& x, double t) const;
  /// Local mean over (t0, t1], analytic for catalogue entries, 5-point Gauss
  /// for custom closures.
  double scalarMean(const std::array<double, 3>& x, double t0, double t1) const;
  std::array<double, 3> vectorMean(const std::array<double, 3>& x, double t0, double t1) const;

  bool isZero() const { return kind == Kind::Zero; }
};

/// Samples the problem data on a mesh: volume force f, heat sources g and h,
/// Dirichlet displacement u_D. f, g, h enter through their local means over
/// each step; u_D is evaluated at the time nodes.
class DataSampler {
 public:
  DataSampler() = default;
  DataSampler(SpaceTimeField f, SpaceTimeField g, SpaceTimeField h, SpaceTimeField uD)
      : f_(std::move(f)), g_(std::move(g)), h_(std::move(h)), uD_(std::move(uD)) {}

  const SpaceTimeField& f() const { return f_; }
  const SpaceTimeField& g() const { return g_; }
  const SpaceTimeField& h() const { return h_; }
  const SpaceTimeField& uD() const { return uD_; }

  /// Nodal local means over ((k-1) tau, k tau].
  Vec gNodalMean(const Mesh& mesh, int k, double tau) const;
  Vec hNodalMean(const Mesh& mesh, int k, double tau) const;
  Vec fNodalMean(const Mesh& mesh, int k, double tau) const;  // size N*dim
  /// Dirichlet displacement at time t, interpolated on all nodes (lifting).
  Vec uDNodal(const Mesh& mesh, double t) const;  // size N*dim

  /// Nonnegativity spot check for g and h over sampled nodes/times.
  void validateNonnegative(const Mesh& mesh, double T) const;

 private:
  SpaceTimeField f_, g_, h_, uD_;
};

}  // namespace thermophase
