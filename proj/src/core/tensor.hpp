#pragma once

#include <array>
#include <cassert>
#include <cmath>

namespace thermophase {

/// Symmetric d x d tensor, d in {1,2,3}, stored as (xx, yy, zz, xy, xz, yz).
/// Off-diagonal slots beyond the active dimension stay zero.
struct SymTensor {
  int dim = 2;
  std::array<double, 6> a{};  // xx yy zz xy xz yz

  SymTensor() = default;
  explicit SymTensor(int d) : dim(d) {}

  static SymTensor zero(int d) { return SymTensor(d); }

  static SymTensor identity(int d) {
    SymTensor t(d);
    for (int i = 0; i < d; ++i) t.a[i] = 1.0;
    return t;
  }

  double& diag(int i) { return a[static_cast<std::size_t>(i)]; }
  double diag(int i) const { return a[static_cast<std::size_t>(i)]; }

  // (i,j) component with symmetric indexing
  double comp(int i, int j) const {
    if (i == j) return a[static_cast<std::size_t>(i)];
    int lo = i < j ? i : j, hi = i < j ? j : i;
    if (lo == 0 && hi == 1) return a[3];
    if (lo == 0 && hi == 2) return a[4];
    return a[5];
  }
  void set(int i, int j, double v) {
    if (i == j) {
      a[static_cast<std::size_t>(i)] = v;
      return;
    }
    int lo = i < j ? i : j, hi = i < j ? j : i;
    if (lo == 0 && hi == 1)
      a[3] = v;
    else if (lo == 0 && hi == 2)
      a[4] = v;
    else
      a[5] = v;
  }

  double trace() const { return a[0] + a[1] + a[2]; }

  SymTensor& operator+=(const SymTensor& o) {
    for (int i = 0; i < 6; ++i) a[static_cast<std::size_t>(i)] += o.a[static_cast<std::size_t>(i)];
    return *this;
  }
  SymTensor& operator-=(const SymTensor& o) {
    for (int i = 0; i < 6; ++i) a[static_cast<std::size_t>(i)] -= o.a[static_cast<std::size_t>(i)];
    return *this;
  }
  SymTensor& operator*=(double s) {
    for (double& x : a) x *= s;
    return *this;
  }

  friend SymTensor operator+(SymTensor x, const SymTensor& y) { return x += y; }
  friend SymTensor operator-(SymTensor x, const SymTensor& y) { return x -= y; }
  friend SymTensor operator*(double s, SymTensor x) { return x *= s; }

  /// Frobenius inner product xi : eta (off-diagonals count twice).
  double ddot(const SymTensor& o) const {
    double s = a[0] * o.a[0] + a[1] * o.a[1] + a[2] * o.a[2];
    s += 2.0 * (a[3] * o.a[3] + a[4] * o.a[4] + a[5] * o.a[5]);
    return s;
  }

  double norm() const { return std::sqrt(ddot(*this)); }
};

/// Isotropic stiffness: C xi = lambda tr(xi) I + 2 mu xi.
struct IsotropicTensor {
  double lambda = 1.0;
  double mu = 1.0;

  SymTensor apply(const SymTensor& xi) const {
    SymTensor out = xi;
    out *= 2.0 * mu;
    double lt = lambda * xi.trace();
    for (int i = 0; i < xi.dim; ++i) out.a[static_cast<std::size_t>(i)] += lt;
    return out;
  }

  /// xi : C xi
  double quadratic(const SymTensor& xi) const { return apply(xi).ddot(xi); }

  /// I : C I for dimension d (used in closed-form splitting bounds).
  double traceContraction(int d) const { return d * (lambda * d + 2.0 * mu); }

  /// Ellipticity constant nu0 with xi : C xi >= nu0 |xi|^2.
  double ellipticity() const { return 2.0 * mu; }
};

}  // namespace thermophase
