#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace thermophase {

/// Closed interval used for conservative range bounds of polynomial
/// coefficient functions.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval point(double v) { return {v, v}; }

  Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
  Interval operator-(const Interval& o) const { return {lo - o.hi, hi - o.lo}; }
  Interval operator*(const Interval& o) const {
    double c[4] = {lo * o.lo, lo * o.hi, hi * o.lo, hi * o.hi};
    return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
  }
  Interval operator*(double s) const { return s >= 0 ? Interval{lo * s, hi * s} : Interval{hi * s, lo * s}; }

  double absMax() const { return std::max(std::fabs(lo), std::fabs(hi)); }
};

/// Univariate polynomial sum_i coeff[i] x^i.
struct Poly1 {
  std::vector<double> c;

  Poly1() = default;
  Poly1(std::initializer_list<double> v) : c(v) {}
  explicit Poly1(std::vector<double> v) : c(std::move(v)) {}

  int degree() const { return c.empty() ? 0 : static_cast<int>(c.size()) - 1; }

  double eval(double x) const {
    double r = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
    return r;
  }

  Poly1 derivative() const {
    if (c.size() <= 1) return Poly1{};
    Poly1 d;
    d.c.resize(c.size() - 1);
    for (std::size_t i = 1; i < c.size(); ++i) d.c[i - 1] = c[i] * static_cast<double>(i);
    return d;
  }

  Interval range(Interval x) const {
    Interval r = Interval::point(0.0);
    for (std::size_t i = c.size(); i-- > 0;) r = r * x + Interval::point(c[i]);
    return r;
  }
};

/// Bivariate polynomial sum_{i,j} coeff[i][j] c^i z^j (small degrees).
struct Poly2 {
  // coeff[i][j] multiplies c^i z^j
  std::vector<std::vector<double>> coeff;

  Poly2() = default;

  static Poly2 constant(double v) {
    Poly2 p;
    p.coeff = {{v}};
    return p;
  }

  /// b(c,z) = z^2
  static Poly2 zSquared() {
    Poly2 p;
    p.coeff = {{0.0, 0.0, 1.0}};
    return p;
  }

  bool isConstant() const {
    return coeff.size() == 1 && coeff[0].size() == 1;
  }

  double eval(double c, double z) const {
    double r = 0.0;
    double ci = 1.0;
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      double zr = 0.0;
      for (std::size_t j = coeff[i].size(); j-- > 0;) zr = zr * z + coeff[i][j];
      r += ci * zr;
      ci *= c;
    }
    return r;
  }

  Poly2 dC() const {
    Poly2 d;
    if (coeff.size() <= 1) return Poly2::constant(0.0);
    d.coeff.resize(coeff.size() - 1);
    for (std::size_t i = 1; i < coeff.size(); ++i) {
      d.coeff[i - 1] = coeff[i];
      for (double& v : d.coeff[i - 1]) v *= static_cast<double>(i);
    }
    return d;
  }

  Poly2 dZ() const {
    Poly2 d;
    d.coeff.resize(coeff.size());
    bool all_empty = true;
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      if (coeff[i].size() <= 1) {
        d.coeff[i] = {0.0};
      } else {
        d.coeff[i].resize(coeff[i].size() - 1);
        for (std::size_t j = 1; j < coeff[i].size(); ++j)
          d.coeff[i][j - 1] = coeff[i][j] * static_cast<double>(j);
        all_empty = false;
      }
    }
    if (all_empty) return Poly2::constant(0.0);
    return d;
  }

  Interval range(Interval c, Interval z) const {
    Interval r = Interval::point(0.0);
    Interval ci = Interval::point(1.0);
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      Interval zr = Interval::point(0.0);
      for (std::size_t j = coeff[i].size(); j-- > 0;) zr = zr * z + Interval::point(coeff[i][j]);
      r = r + ci * zr;
      ci = ci * c;
    }
    return r;
  }
};

}  // namespace thermophase
