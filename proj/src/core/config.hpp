#pragma once

#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "material.hpp"
#include "stepper.hpp"

namespace thermophase {

/// Parsed and validated run configuration (sectioned key-value text).
struct RunConfig {
  // [domain]
  int dim = 2;
  std::array<double, 3> extents{1.0, 1.0, 1.0};
  std::array<int, 3> cells{16, 16, 1};

  // [time]
  double T = 1.0;
  double tau = 0.02;

  // [material]
  MaterialModel material;

  // [solver] + [continuation]
  SchemeParams scheme;

  // [initial]
  std::string initial_preset = "uniform";  // uniform | cosine-perturbation
  double init_c = 0.0;
  double init_z = 1.0;
  double init_theta = 1.0;
  double init_perturb = 0.0;  // amplitude of the cosine perturbation on c

  // [data]
  SpaceTimeField f = SpaceTimeField::zero();
  SpaceTimeField g = SpaceTimeField::zero();
  SpaceTimeField h = SpaceTimeField::zero();
  SpaceTimeField uD = SpaceTimeField::zero();

  // [output]
  std::string out_dir = "out";
  int cadence = 1;
  bool write_csv = true;
  bool write_vtk = false;
  bool monitors_on = true;
  double monitor_tol = 1e-6;
};

/// Parses the sectioned key-value text; throws ConfigInvalid listing every
/// violated constraint.
RunConfig parseConfig(const std::string& text);

/// Canonical serialization; parseConfig(serializeConfig(c)) reproduces c.
std::string serializeConfig(const RunConfig& cfg);

struct PresetInfo {
  std::string name;
  std::string brief;
  std::string config_text;
};
const std::vector<PresetInfo>& builtinPresets();
RunConfig presetConfig(const std::string& name);

}  // namespace thermophase
