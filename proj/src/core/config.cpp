#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace thermophase {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> splitWords(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

using Section = std::map<std::string, std::string>;
using Sections = std::map<std::string, Section>;

Sections tokenize(const std::string& text, std::vector<std::string>& errors) {
  Sections out;
  std::string current;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back("line " + std::to_string(lineno) + ": malformed section header");
        continue;
      }
      current = trim(line.substr(1, line.size() - 2));
      out[current];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (current.empty()) {
      errors.push_back("line " + std::to_string(lineno) + ": key outside any section");
      continue;
    }
    out[current][key] = val;
  }
  return out;
}

struct Reader {
  const Sections& sec;
  std::vector<std::string>& errors;

  bool has(const std::string& s, const std::string& k) const {
    auto it = sec.find(s);
    return it != sec.end() && it->second.count(k) > 0;
  }
  std::string raw(const std::string& s, const std::string& k, const std::string& dflt) const {
    auto it = sec.find(s);
    if (it == sec.end()) return dflt;
    auto jt = it->second.find(k);
    return jt == it->second.end() ? dflt : jt->second;
  }
  double num(const std::string& s, const std::string& k, double dflt) {
    const std::string v = raw(s, k, "");
    if (v.empty()) return dflt;
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (...) {
      errors.push_back("[" + s + "] " + k + ": not a number: '" + v + "'");
      return dflt;
    }
  }
  int integer(const std::string& s, const std::string& k, int dflt) {
    const double x = num(s, k, dflt);
    return static_cast<int>(std::llround(x));
  }
  bool flag(const std::string& s, const std::string& k, bool dflt) {
    const std::string v = raw(s, k, "");
    if (v.empty()) return dflt;
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    errors.push_back("[" + s + "] " + k + ": expected on/off");
    return dflt;
  }
  std::vector<double> numbers(const std::string& s, const std::string& k,
                              std::vector<double> dflt) {
    const std::string v = raw(s, k, "");
    if (v.empty()) return dflt;
    std::vector<double> out;
    for (const std::string& w : splitWords(v)) {
      try {
        out.push_back(w == "inf" ? std::numeric_limits<double>::infinity() : std::stod(w));
      } catch (...) {
        errors.push_back("[" + s + "] " + k + ": not a number: '" + w + "'");
        return dflt;
      }
    }
    return out;
  }
};

Poly2 parseCoeffField(Reader& rd, const std::string& sec, const std::string& key,
                      const Poly2& dflt) {
  const std::string v = rd.raw(sec, key, "");
  if (v.empty()) return dflt;
  const auto words = splitWords(v);
  if (words[0] == "z2") return Poly2::zSquared();
  if (words[0] == "const" && words.size() == 2) return Poly2::constant(std::stod(words[1]));
  if (words[0] == "poly" && words.size() >= 3) {
    // poly <deg_c> <deg_z> <coeffs row-major in c, then z>
    const int dc = std::stoi(words[1]);
    const int dz = std::stoi(words[2]);
    const std::size_t need = static_cast<std::size_t>((dc + 1) * (dz + 1));
    if (words.size() != 3 + need) {
      rd.errors.push_back("[" + sec + "] " + key + ": poly needs (deg_c+1)*(deg_z+1) coefficients");
      return dflt;
    }
    Poly2 p;
    p.coeff.assign(static_cast<std::size_t>(dc + 1), std::vector<double>(static_cast<std::size_t>(dz + 1), 0.0));
    std::size_t w = 3;
    for (int i = 0; i <= dc; ++i)
      for (int j = 0; j <= dz; ++j)
        p.coeff[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::stod(words[w++]);
    return p;
  }
  rd.errors.push_back("[" + sec + "] " + key + ": expected 'z2', 'const v' or 'poly ...'");
  return dflt;
}

SpaceTimeField parseDataField(Reader& rd, const std::string& key, bool vector_valued) {
  const std::string v = rd.raw("data", key, "zero");
  const auto words = splitWords(v);
  try {
    if (words.empty() || words[0] == "zero") return SpaceTimeField::zero();
    if (words[0] == "constant" && words.size() == 2)
      return SpaceTimeField::constant(std::stod(words[1]));
    if (words[0] == "linear_t" && words.size() == 3)
      return SpaceTimeField::linearInT(std::stod(words[1]), std::stod(words[2]));
    if (words[0] == "gaussian_pulse" && words.size() == 6)
      return SpaceTimeField::gaussianPulse(
          std::stod(words[1]), {std::stod(words[2]), std::stod(words[3]), 0.0},
          std::stod(words[4]), std::stod(words[5]));
    if (vector_valued && words[0] == "ramp_uniaxial" && words.size() == 2)
      return SpaceTimeField::rampUniaxial(std::stod(words[1]));
    if (vector_valued && words[0] == "ramp_shear" && words.size() == 2)
      return SpaceTimeField::rampShear(std::stod(words[1]));
  } catch (...) {
  }
  rd.errors.push_back("[data] " + key + ": unknown field spec '" + v + "'");
  return SpaceTimeField::zero();
}

std::string fmtNum(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  return s;
}

std::string coeffFieldToString(const Poly2& p) {
  if (p.coeff.size() == 1 && p.coeff[0].size() == 3 && p.coeff[0][0] == 0.0 &&
      p.coeff[0][1] == 0.0 && p.coeff[0][2] == 1.0)
    return "z2";
  if (p.isConstant()) return "const " + fmtNum(p.coeff[0][0]);
  std::ostringstream os;
  const int dc = static_cast<int>(p.coeff.size()) - 1;
  int dz = 0;
  for (const auto& row : p.coeff) dz = std::max(dz, static_cast<int>(row.size()) - 1);
  os << "poly " << dc << ' ' << dz;
  for (int i = 0; i <= dc; ++i)
    for (int j = 0; j <= dz; ++j) {
      const double v = (j < static_cast<int>(p.coeff[static_cast<std::size_t>(i)].size()))
                           ? p.coeff[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                           : 0.0;
      os << ' ' << fmtNum(v);
    }
  return os.str();
}

std::string dataFieldToString(const SpaceTimeField& f) {
  using K = SpaceTimeField::Kind;
  std::ostringstream os;
  switch (f.kind) {
    case K::Zero: return "zero";
    case K::Constant: os << "constant " << fmtNum(f.value); break;
    case K::LinearInT: os << "linear_t " << fmtNum(f.value) << ' ' << fmtNum(f.slope); break;
    case K::GaussianPulse:
      os << "gaussian_pulse " << fmtNum(f.amp) << ' ' << fmtNum(f.center[0]) << ' '
         << fmtNum(f.center[1]) << ' ' << fmtNum(f.width) << ' ' << fmtNum(f.t_decay);
      break;
    case K::RampUniaxial: os << "ramp_uniaxial " << fmtNum(f.rate); break;
    case K::RampShear: os << "ramp_shear " << fmtNum(f.rate); break;
    case K::Custom: return "custom";  // not serializable
  }
  return os.str();
}

}  // namespace

RunConfig parseConfig(const std::string& text) {
  std::vector<std::string> errors;
  const Sections sec = tokenize(text, errors);
  Reader rd{sec, errors};
  RunConfig cfg;

  // [domain]
  cfg.dim = rd.integer("domain", "dim", 2);
  if (cfg.dim < 1 || cfg.dim > 3) errors.push_back("[domain] dim must be 1, 2 or 3");
  {
    auto ext = rd.numbers("domain", "extents", {1.0, 1.0, 1.0});
    auto cl = rd.numbers("domain", "cells", {16.0, 16.0, 1.0});
    for (int i = 0; i < 3; ++i) {
      if (i < static_cast<int>(ext.size())) cfg.extents[static_cast<std::size_t>(i)] = ext[static_cast<std::size_t>(i)];
      if (i < static_cast<int>(cl.size()))
        cfg.cells[static_cast<std::size_t>(i)] = static_cast<int>(std::llround(cl[static_cast<std::size_t>(i)]));
    }
    for (int i = 0; i < cfg.dim; ++i) {
      if (cfg.extents[static_cast<std::size_t>(i)] <= 0.0)
        errors.push_back("[domain] extents must be positive");
      if (cfg.cells[static_cast<std::size_t>(i)] < 1)
        errors.push_back("[domain] cells must be at least 1 per axis");
    }
  }

  // [time]
  cfg.T = rd.num("time", "T", 1.0);
  cfg.tau = rd.num("time", "tau", 0.02);
  if (cfg.T < 0.0) errors.push_back("[time] T must be nonnegative");
  if (cfg.tau <= 0.0) errors.push_back("[time] tau must be positive (tau > 0)");

  // [material]
  MaterialModel& mat = cfg.material;
  {
    const std::string pot = rd.raw("material", "potential", "double_well");
    if (pot == "double_well") {
      mat.potential = ConcentrationPotential::doubleWell();
    } else if (pot == "indicator") {
      mat.potential = ConcentrationPotential::indicator(rd.num("material", "c_lo", -1.0),
                                                        rd.num("material", "c_hi", 1.0));
      if (!(mat.potential.c_lo < mat.potential.c_hi))
        errors.push_back("[material] indicator potential needs c_lo < c_hi");
    } else {
      errors.push_back("[material] potential must be double_well or indicator");
    }
    if (rd.has("material", "gamma")) {
      const auto gv = rd.numbers("material", "gamma", {});
      if (gv.size() > 3)
        errors.push_back("[material] gamma must be quadratic: g0 g1 g2");
      else
        mat.potential.gamma = Poly1(gv);
      mat.potential.refreshDerived();
    }
    mat.potential.lambda_gamma = rd.num("material", "lambda_gamma", mat.potential.lambda_gamma);
    if (mat.potential.lambda_gamma < 0.0)
      errors.push_back("[material] lambda_gamma must be nonnegative");
    // gamma'' <= lambda_gamma keeps gamma - lambda c^2/2 concave
    const double g2 = mat.potential.gamma.c.size() > 2 ? 2.0 * mat.potential.gamma.c[2] : 0.0;
    if (g2 > mat.potential.lambda_gamma + 1e-14)
      errors.push_back(
          "[material] gamma'' exceeds lambda_gamma (the concave-perturbation bound "
          "gamma'' <= lambda_gamma fails)");

    mat.elastic.lame_lambda = rd.num("material", "lame_lambda", 1.0);
    mat.elastic.lame_mu = rd.num("material", "lame_mu", 1.0);
    if (mat.elastic.lame_mu <= 0.0)
      errors.push_back("[material] lame_mu must be positive (ellipticity nu0 = 2 mu > 0)");
    if (mat.elastic.lame_lambda < 0.0)
      errors.push_back("[material] lame_lambda must be nonnegative");
    mat.elastic.viscosity_factor = rd.num("material", "viscosity_factor", 1.0);
    if (mat.elastic.viscosity_factor <= 0.0)
      errors.push_back("[material] viscosity_factor must be positive (V = factor * C)");
    mat.elastic.b_model = parseCoeffField(rd, "material", "b", Poly2::zSquared());
    mat.elastic.eigenstrain_coeff = rd.num("material", "alpha_star", 0.0);
    mat.elastic.a_model = parseCoeffField(rd, "material", "a", Poly2::constant(1.0));
    mat.mobility = parseCoeffField(rd, "material", "m", Poly2::constant(1.0));

    // Coefficient bounds on the working range (truncated c, z in [0,1]).
    const double S = rd.num("material", "trunc_halfwidth", 10.0) + 0.5;
    const Interval crange{-S, S};
    const Interval zrange{0.0, 1.0};
    const Interval brange = mat.elastic.b_model.range(crange, zrange);
    if (brange.lo < -1e-12)
      errors.push_back("[material] b(c,z) must be nonnegative (0 <= b <= b0)");
    mat.elastic.b0 = brange.hi;
    const Interval arange = mat.elastic.a_model.range(crange, zrange);
    if (arange.lo <= 0.0)
      errors.push_back("[material] a(c,z) must be bounded away from zero (a0 > 0)");
    mat.elastic.a0 = arange.lo;
    mat.elastic.a1 = arange.hi;
    mat.elastic.a2 = mat.elastic.a_model.dC().range(crange, zrange).absMax() +
                     mat.elastic.a_model.dZ().range(crange, zrange).absMax();
    const Interval mrange = mat.mobility.range(crange, zrange);
    if (mrange.lo <= 0.0)
      errors.push_back("[material] mobility m(c,z) must be bounded below by m0 > 0");
    mat.m0 = mrange.lo;

    const std::string sig = rd.raw("material", "sigma", "linear 0");
    const auto sw = splitWords(sig);
    if (sw.size() == 2 && sw[0] == "linear") {
      mat.damage = DamagePotential::linear(std::stod(sw[1]));
    } else if (!sw.empty() && sw[0] == "poly" && sw.size() >= 2 && sw.size() <= 6) {
      std::vector<double> co;
      for (std::size_t i = 1; i < sw.size(); ++i) co.push_back(std::stod(sw[i]));
      mat.damage = DamagePotential::fromPoly(Poly1(co));
    } else {
      errors.push_back("[material] sigma must be 'linear alpha' or 'poly c0 .. c4' (degree <= 4)");
    }

    mat.heat.c0 = rd.num("material", "heat_c0", 1.0);
    mat.heat.c1 = mat.heat.c0;
    mat.heat.kappa = rd.num("material", "kappa", 2.0);
    mat.heat.rho = rd.num("material", "rho", 1.0);
    mat.heat.M = rd.num("material", "heat_M", std::numeric_limits<double>::infinity());
    if (mat.heat.c0 <= 0.0) errors.push_back("[material] heat_c0 must be positive");
    if (!(mat.heat.kappa > 1.0))
      errors.push_back("[material] heat conductivity growth exponent must satisfy kappa > 1");
    if (mat.heat.rho <= 0.0)
      errors.push_back("[material] thermal expansion rho must be positive");

    mat.reg.omega_reg = rd.num("material", "omega_reg", 0.1);
    mat.reg.trunc_halfwidth = rd.num("material", "trunc_halfwidth", 10.0);
    if (mat.reg.omega_reg <= 0.0)
      errors.push_back("[material] omega_reg must be positive (Yosida index)");
    if (mat.reg.trunc_halfwidth <= 0.0)
      errors.push_back("[material] trunc_halfwidth must be positive");
  }

  // [solver]
  SchemeParams& sch = cfg.scheme;
  sch.T = cfg.T;
  sch.tau = cfg.tau;
  sch.p = rd.num("solver", "p", cfg.dim == 1 ? 2.0 : (cfg.dim == 2 ? 3.0 : 4.0));
  sch.eps_p = rd.num("solver", "eps_p", 1e-8);
  sch.p_override = rd.flag("solver", "p_override", false);
  if (sch.p <= 1.0) errors.push_back("[solver] gradient exponent p must exceed 1");
  if (sch.p <= cfg.dim && !sch.p_override)
    errors.push_back("[solver] p must exceed the spatial dimension d (set p_override to force)");
  sch.omega_reg = mat.reg.omega_reg;
  sch.solver.sweep_tol = rd.num("solver", "sweep_tol", 1e-10);
  sch.solver.newton_tol = rd.num("solver", "newton_tol", 1e-12);
  sch.solver.max_sweeps = rd.integer("solver", "max_sweeps", 80);
  sch.solver.max_newton = rd.integer("solver", "max_newton", 50);
  sch.solver.damping = rd.num("solver", "damping", 1.0);
  sch.solver.pdas_max_iter = rd.integer("solver", "pdas_max_iter", 60);
  sch.solver.allow_substepping = rd.flag("solver", "allow_substepping", true);

  // [continuation]
  {
    const std::string mode = rd.raw("continuation", "mode", "auto");
    if (mode == "off")
      sch.continuation.mode = ContinuationParams::Mode::Off;
    else if (mode == "auto")
      sch.continuation.mode = ContinuationParams::Mode::Auto;
    else if (mode == "on")
      sch.continuation.mode = ContinuationParams::Mode::On;
    else
      errors.push_back("[continuation] mode must be off/auto/on");
    sch.continuation.nu0 = rd.num("continuation", "nu0", 1e-2);
    sch.continuation.nu_factor = rd.num("continuation", "nu_factor", 1e-2);
    sch.continuation.stages = rd.integer("continuation", "stages", 3);
    sch.continuation.varrho = rd.num("continuation", "varrho", 6.0);
    sch.continuation.M0 = rd.num("continuation", "M0", 1e3);
    sch.continuation.M_factor = rd.num("continuation", "M_factor", 10.0);
    if (sch.continuation.varrho <= 4.0)
      errors.push_back("[continuation] varrho must exceed 4");
  }

  // [initial]
  cfg.initial_preset = rd.raw("initial", "preset", "uniform");
  if (cfg.initial_preset != "uniform" && cfg.initial_preset != "cosine-perturbation")
    errors.push_back("[initial] preset must be uniform or cosine-perturbation");
  cfg.init_c = rd.num("initial", "c", 0.0);
  cfg.init_z = rd.num("initial", "z", 1.0);
  cfg.init_theta = rd.num("initial", "theta", 1.0);
  cfg.init_perturb = rd.num("initial", "perturb", 0.0);
  if (cfg.init_z < 0.0 || cfg.init_z > 1.0)
    errors.push_back("[initial] damage must satisfy 0 <= z0 <= 1");
  if (!(cfg.init_theta > 0.0))
    errors.push_back("[initial] temperature must satisfy theta0 >= theta_* > 0");

  // [data]
  cfg.f = parseDataField(rd, "f", true);
  cfg.g = parseDataField(rd, "g", false);
  cfg.h = parseDataField(rd, "h", false);
  cfg.uD = parseDataField(rd, "uD", true);
  auto nonneg = [&](const SpaceTimeField& fld, const char* name) {
    using K = SpaceTimeField::Kind;
    bool bad = false;
    switch (fld.kind) {
      case K::Constant: bad = fld.value < 0.0; break;
      case K::LinearInT: bad = fld.value < 0.0 || fld.value + fld.slope * cfg.T < 0.0; break;
      case K::GaussianPulse: bad = fld.amp < 0.0; break;
      default: break;
    }
    if (bad)
      errors.push_back(std::string("[data] ") + name + " must be nonnegative over [0, T]");
  };
  nonneg(cfg.g, "g");
  nonneg(cfg.h, "h");

  // [output]
  cfg.out_dir = rd.raw("output", "dir", "out");
  cfg.cadence = rd.integer("output", "cadence", 1);
  if (cfg.cadence < 1) errors.push_back("[output] cadence must be >= 1");
  const std::string formats = rd.raw("output", "formats", "csv");
  cfg.write_csv = formats.find("csv") != std::string::npos;
  cfg.write_vtk = formats.find("vtk") != std::string::npos;
  cfg.monitors_on = rd.flag("output", "monitors", true);
  cfg.monitor_tol = rd.num("output", "monitor_tol", 1e-6);

  if (!errors.empty()) {
    std::ostringstream os;
    os << "invalid configuration (" << errors.size() << " problem"
       << (errors.size() == 1 ? "" : "s") << "):";
    for (const std::string& e : errors) os << "\n  - " << e;
    throw Error(ErrorCode::ConfigInvalid, os.str());
  }
  return cfg;
}

std::string serializeConfig(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[domain]\n";
  os << "dim = " << cfg.dim << "\n";
  os << "extents =";
  for (int i = 0; i < cfg.dim; ++i) os << ' ' << fmtNum(cfg.extents[static_cast<std::size_t>(i)]);
  os << "\ncells =";
  for (int i = 0; i < cfg.dim; ++i) os << ' ' << cfg.cells[static_cast<std::size_t>(i)];
  os << "\n\n[time]\n";
  os << "T = " << fmtNum(cfg.T) << "\n";
  os << "tau = " << fmtNum(cfg.tau) << "\n";

  const MaterialModel& m = cfg.material;
  os << "\n[material]\n";
  os << "potential = "
     << (m.potential.kind == ConcentrationPotential::Kind::Polynomial ? "double_well"
                                                                      : "indicator")
     << "\n";
  if (m.potential.kind == ConcentrationPotential::Kind::Indicator) {
    os << "c_lo = " << fmtNum(m.potential.c_lo) << "\n";
    os << "c_hi = " << fmtNum(m.potential.c_hi) << "\n";
  }
  os << "gamma =";
  for (double v : m.potential.gamma.c) os << ' ' << fmtNum(v);
  os << "\nlambda_gamma = " << fmtNum(m.potential.lambda_gamma) << "\n";
  os << "lame_lambda = " << fmtNum(m.elastic.lame_lambda) << "\n";
  os << "lame_mu = " << fmtNum(m.elastic.lame_mu) << "\n";
  os << "viscosity_factor = " << fmtNum(m.elastic.viscosity_factor) << "\n";
  os << "b = " << coeffFieldToString(m.elastic.b_model) << "\n";
  os << "alpha_star = " << fmtNum(m.elastic.eigenstrain_coeff) << "\n";
  os << "a = " << coeffFieldToString(m.elastic.a_model) << "\n";
  os << "m = " << coeffFieldToString(m.mobility) << "\n";
  {
    // sigma: keep the linear shorthand when it applies
    const Poly1& s = m.damage.sigma;
    bool linear = s.c.size() == 2 && s.c[0] == -s.c[1];
    if (s.c.size() == 1 && s.c[0] == 0.0) linear = true;
    if (linear) {
      os << "sigma = linear " << fmtNum(s.c.size() == 2 ? s.c[0] : 0.0) << "\n";
    } else {
      os << "sigma = poly";
      for (double v : s.c) os << ' ' << fmtNum(v);
      os << "\n";
    }
  }
  os << "heat_c0 = " << fmtNum(m.heat.c0) << "\n";
  os << "kappa = " << fmtNum(m.heat.kappa) << "\n";
  os << "rho = " << fmtNum(m.heat.rho) << "\n";
  os << "heat_M = " << fmtNum(m.heat.M) << "\n";
  os << "omega_reg = " << fmtNum(m.reg.omega_reg) << "\n";
  os << "trunc_halfwidth = " << fmtNum(m.reg.trunc_halfwidth) << "\n";

  const SchemeParams& s = cfg.scheme;
  os << "\n[solver]\n";
  os << "p = " << fmtNum(s.p) << "\n";
  os << "eps_p = " << fmtNum(s.eps_p) << "\n";
  os << "p_override = " << (s.p_override ? "on" : "off") << "\n";
  os << "sweep_tol = " << fmtNum(s.solver.sweep_tol) << "\n";
  os << "newton_tol = " << fmtNum(s.solver.newton_tol) << "\n";
  os << "max_sweeps = " << s.solver.max_sweeps << "\n";
  os << "max_newton = " << s.solver.max_newton << "\n";
  os << "damping = " << fmtNum(s.solver.damping) << "\n";
  os << "pdas_max_iter = " << s.solver.pdas_max_iter << "\n";
  os << "allow_substepping = " << (s.solver.allow_substepping ? "on" : "off") << "\n";

  os << "\n[continuation]\n";
  os << "mode = "
     << (s.continuation.mode == ContinuationParams::Mode::Off
             ? "off"
             : (s.continuation.mode == ContinuationParams::Mode::Auto ? "auto" : "on"))
     << "\n";
  os << "nu0 = " << fmtNum(s.continuation.nu0) << "\n";
  os << "nu_factor = " << fmtNum(s.continuation.nu_factor) << "\n";
  os << "stages = " << s.continuation.stages << "\n";
  os << "varrho = " << fmtNum(s.continuation.varrho) << "\n";
  os << "M0 = " << fmtNum(s.continuation.M0) << "\n";
  os << "M_factor = " << fmtNum(s.continuation.M_factor) << "\n";

  os << "\n[initial]\n";
  os << "preset = " << cfg.initial_preset << "\n";
  os << "c = " << fmtNum(cfg.init_c) << "\n";
  os << "z = " << fmtNum(cfg.init_z) << "\n";
  os << "theta = " << fmtNum(cfg.init_theta) << "\n";
  os << "perturb = " << fmtNum(cfg.init_perturb) << "\n";

  os << "\n[data]\n";
  os << "f = " << dataFieldToString(cfg.f) << "\n";
  os << "g = " << dataFieldToString(cfg.g) << "\n";
  os << "h = " << dataFieldToString(cfg.h) << "\n";
  os << "uD = " << dataFieldToString(cfg.uD) << "\n";

  os << "\n[output]\n";
  os << "dir = " << cfg.out_dir << "\n";
  os << "cadence = " << cfg.cadence << "\n";
  os << "formats =" << (cfg.write_csv ? " csv" : "") << (cfg.write_vtk ? " vtk" : "") << "\n";
  os << "monitors = " << (cfg.monitors_on ? "on" : "off") << "\n";
  os << "monitor_tol = " << fmtNum(cfg.monitor_tol) << "\n";
  return os.str();
}

const std::vector<PresetInfo>& builtinPresets() {
  static const std::vector<PresetInfo> presets = [] {
    std::vector<PresetInfo> v;

    v.push_back({"equilibrium",
                 "uniform resting state (c=0, z=1, theta=1), zero data; nothing should move",
                 R"([domain]
dim = 2
extents = 1 1
cells = 16 16

[time]
T = 1.0
tau = 0.02

[material]
potential = double_well
lame_lambda = 1
lame_mu = 1
viscosity_factor = 0.5
alpha_star = 0
sigma = linear 0.1
heat_c0 = 1
kappa = 2
rho = 0.5
omega_reg = 0.1

[initial]
preset = uniform
c = 0
z = 1
theta = 1

[data]
f = zero
g = zero
h = zero
uD = zero

[output]
dir = out/equilibrium
)"});

    v.push_back({"spinodal-decomposition",
                 "cosine-perturbed concentration relaxing through the conserved flow",
                 R"([domain]
dim = 2
extents = 1 1
cells = 16 16

[time]
T = 0.5
tau = 0.02

[material]
potential = double_well
lame_lambda = 1
lame_mu = 1
viscosity_factor = 0.5
alpha_star = 0.05
sigma = linear 0.1
heat_c0 = 1
kappa = 2
rho = 0.5
omega_reg = 0.1

[initial]
preset = cosine-perturbation
c = 0
z = 1
theta = 1
perturb = 0.2

[data]
f = zero
g = zero
h = zero
uD = zero

[output]
dir = out/spinodal
)"});

    v.push_back({"damage-loading",
                 "ramped uniaxial stretch with boundary heating; damage accumulates",
                 R"([domain]
dim = 2
extents = 1 1
cells = 16 16

[time]
T = 1.0
tau = 0.02

[material]
potential = double_well
lame_lambda = 1
lame_mu = 1
viscosity_factor = 0.5
alpha_star = 0.1
sigma = linear 0
heat_c0 = 0.2
kappa = 2
rho = 0.5
omega_reg = 0.1

[initial]
preset = uniform
c = 0
z = 1
theta = 0.1

[data]
f = zero
g = zero
h = constant 0.01
uD = ramp_uniaxial 0.25

[output]
dir = out/damage-loading
)"});

    v.push_back({"thermal-pulse",
                 "gaussian heat source driving the quasilinear conduction",
                 R"([domain]
dim = 2
extents = 1 1
cells = 16 16

[time]
T = 0.5
tau = 0.02

[material]
potential = double_well
lame_lambda = 1
lame_mu = 1
viscosity_factor = 0.5
alpha_star = 0.05
sigma = linear 0.1
heat_c0 = 1
kappa = 1.5
rho = 0.5
omega_reg = 0.1

[initial]
preset = uniform
c = 0
z = 1
theta = 1

[data]
f = zero
g = gaussian_pulse 2.0 0.5 0.5 0.2 0.25
h = zero
uD = zero

[output]
dir = out/thermal-pulse
)"});
    return v;
  }();
  return presets;
}

RunConfig presetConfig(const std::string& name) {
  for (const PresetInfo& p : builtinPresets())
    if (p.name == name) return parseConfig(p.config_text);
  throw Error(ErrorCode::BadArgument, "unknown preset '" + name + "'");
}

}  // namespace thermophase
