#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "stepper.hpp"

namespace thermophase {

/// Lossless decimal formatting: shortest round-trip representation, with a
/// trailing ".0" appended to integral values so columns stay visibly real.
std::string formatDouble(double v);

/// Flat CSV of one scalar field: node, coords..., value (one row per node).
void writeFieldCsv(const Mesh& mesh, const Vec& field, const std::string& path);

/// Writes state snapshots. formats: subset of {"csv", "vtk"}; files are named
/// <prefix>.<field>.csv and <prefix>.vtk under dir.
void writeSnapshot(const Mesh& mesh, const State& state, const std::string& dir,
                   const std::vector<std::string>& formats, const std::string& prefix);

/// VTK legacy ASCII structured-points snapshot with all fields.
void writeVtkSnapshot(const Mesh& mesh, const State& state, const std::string& path);

uint64_t fnv1a64(const std::string& bytes);

/// On-disk trajectory: manifest.json + per-step state CSVs + reports.csv.
struct ArchiveWriter {
  ArchiveWriter(const std::string& dir, const RunConfig& cfg, const Mesh& mesh);
  void appendState(const State& state);
  void appendReport(const StepReport& report);
  /// Writes manifest.json; call once after the last state.
  void finalize();

 private:
  std::string dir_;
  std::string config_text_;
  const Mesh* mesh_;
  int states_ = 0;
  std::vector<std::pair<std::string, uint64_t>> file_hashes_;
  std::vector<StepReport> reports_;
  bool csv_ = true;
  bool vtk_ = false;
  int cadence_ = 1;
};

/// Reads an archive back; verifies manifest hashes (refuses truncation) and
/// rebuilds the problem from the embedded configuration.
struct LoadedArchive {
  RunConfig config;
  Trajectory trajectory;
};
LoadedArchive readArchive(const std::string& dir);

std::string readTextFile(const std::string& path);
void writeTextFileAtomic(const std::string& path, const std::string& content);

}  // namespace thermophase
