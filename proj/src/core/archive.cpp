#include "archive.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace thermophase {

namespace fs = std::filesystem;
using nlohmann::json;

std::string formatDouble(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
    s += ".0";
  return s;
}

std::string readTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void writeTextFileAtomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp + " to " + path);
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string coordColumns(const Mesh& mesh) {
  const char* names[3] = {"x", "y", "z_coord"};
  std::string s;
  for (int i = 0; i < mesh.dim(); ++i) {
    s += ',';
    s += names[i];
  }
  return s;
}

std::string coordValues(const Mesh& mesh, int node) {
  const auto x = mesh.nodeCoords(node);
  std::string s;
  for (int i = 0; i < mesh.dim(); ++i) {
    s += ',';
    s += formatDouble(x[static_cast<std::size_t>(i)]);
  }
  return s;
}

}  // namespace

void writeFieldCsv(const Mesh& mesh, const Vec& field, const std::string& path) {
  std::ostringstream os;
  os << "node" << coordColumns(mesh) << ",value\n";
  for (int n = 0; n < mesh.numNodes(); ++n)
    os << n << coordValues(mesh, n) << ',' << formatDouble(field[static_cast<std::size_t>(n)])
       << '\n';
  writeTextFileAtomic(path, os.str());
}

namespace {

std::string stateCsv(const Mesh& mesh, const State& s) {
  const int dim = mesh.dim();
  std::ostringstream os;
  os << "node" << coordColumns(mesh) << ",c,mu,z,theta";
  const char* comp[3] = {"x", "y", "z"};
  for (int d = 0; d < dim; ++d) os << ",u_" << comp[d];
  for (int d = 0; d < dim; ++d) os << ",v_" << comp[d];
  os << '\n';
  for (int n = 0; n < mesh.numNodes(); ++n) {
    const std::size_t sn = static_cast<std::size_t>(n);
    os << n << coordValues(mesh, n) << ',' << formatDouble(s.c[sn]) << ','
       << formatDouble(s.mu[sn]) << ',' << formatDouble(s.z[sn]) << ','
       << formatDouble(s.theta[sn]);
    for (int d = 0; d < dim; ++d)
      os << ',' << formatDouble(s.u[static_cast<std::size_t>(n * dim + d)]);
    for (int d = 0; d < dim; ++d)
      os << ',' << formatDouble(s.v[static_cast<std::size_t>(n * dim + d)]);
    os << '\n';
  }
  return os.str();
}

State stateFromCsv(const Mesh& mesh, const std::string& text, int k) {
  const int dim = mesh.dim();
  const int N = mesh.numNodes();
  State s;
  s.k = k;
  s.c.assign(static_cast<std::size_t>(N), 0.0);
  s.mu.assign(static_cast<std::size_t>(N), 0.0);
  s.z.assign(static_cast<std::size_t>(N), 0.0);
  s.theta.assign(static_cast<std::size_t>(N), 0.0);
  s.u.assign(static_cast<std::size_t>(N * dim), 0.0);
  s.v.assign(static_cast<std::size_t>(N * dim), 0.0);
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::IoError, "state file is empty");
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) next = line.size();
      vals.push_back(std::strtod(line.substr(pos, next - pos).c_str(), nullptr));
      pos = next + 1;
    }
    const int expected = 1 + dim + 4 + 2 * dim;
    if (static_cast<int>(vals.size()) != expected)
      throw Error(ErrorCode::IoError, "state file row has the wrong column count");
    const int n = static_cast<int>(vals[0]);
    if (n < 0 || n >= N) throw Error(ErrorCode::IoError, "state file node index out of range");
    std::size_t col = static_cast<std::size_t>(1 + dim);
    const std::size_t sn = static_cast<std::size_t>(n);
    s.c[sn] = vals[col++];
    s.mu[sn] = vals[col++];
    s.z[sn] = vals[col++];
    s.theta[sn] = vals[col++];
    for (int d = 0; d < dim; ++d) s.u[static_cast<std::size_t>(n * dim + d)] = vals[col++];
    for (int d = 0; d < dim; ++d) s.v[static_cast<std::size_t>(n * dim + d)] = vals[col++];
    ++rows;
  }
  if (rows != N) throw Error(ErrorCode::IoError, "state file truncated (missing node rows)");
  return s;
}

std::string reportsCsvHeader() {
  return "k,sweeps,newton_ch,newton_temp,newton_mom,pdas_iters,active_upper,active_lower,"
         "res_temp,combined_residual,theta_min,theta_max,mass_defect,complementarity_gap,"
         "energy_residual,energy_scale,min_split_margin,used_continuation,substeps,"
         "tau_effective\n";
}

std::string reportCsvRow(const StepReport& r) {
  std::ostringstream os;
  os << r.k << ',' << r.sweeps << ',' << r.newton_ch << ',' << r.newton_temp << ','
     << r.newton_mom << ',' << r.pdas_iters << ',' << r.active_upper << ',' << r.active_lower
     << ',' << formatDouble(r.res_temp) << ',' << formatDouble(r.combined_residual) << ','
     << formatDouble(r.theta_min) << ',' << formatDouble(r.theta_max) << ','
     << formatDouble(r.mass_defect) << ',' << formatDouble(r.complementarity_gap) << ','
     << formatDouble(r.energy_residual) << ',' << formatDouble(r.energy_scale) << ','
     << formatDouble(r.min_split_margin) << ',' << (r.used_continuation ? 1 : 0) << ','
     << r.substeps << ',' << formatDouble(r.tau_effective) << '\n';
  return os.str();
}

StepReport reportFromCsvRow(const std::string& line) {
  StepReport r;
  std::vector<std::string> cols;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t next = line.find(',', pos);
    if (next == std::string::npos) next = line.size();
    cols.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  if (cols.size() != 20) throw Error(ErrorCode::IoError, "report row has the wrong column count");
  std::size_t i = 0;
  r.k = std::stoi(cols[i++]);
  r.sweeps = std::stoi(cols[i++]);
  r.newton_ch = std::stoi(cols[i++]);
  r.newton_temp = std::stoi(cols[i++]);
  r.newton_mom = std::stoi(cols[i++]);
  r.pdas_iters = std::stoi(cols[i++]);
  r.active_upper = std::stoi(cols[i++]);
  r.active_lower = std::stoi(cols[i++]);
  r.res_temp = std::strtod(cols[i++].c_str(), nullptr);
  r.combined_residual = std::strtod(cols[i++].c_str(), nullptr);
  r.theta_min = std::strtod(cols[i++].c_str(), nullptr);
  r.theta_max = std::strtod(cols[i++].c_str(), nullptr);
  r.mass_defect = std::strtod(cols[i++].c_str(), nullptr);
  r.complementarity_gap = std::strtod(cols[i++].c_str(), nullptr);
  r.energy_residual = std::strtod(cols[i++].c_str(), nullptr);
  r.energy_scale = std::strtod(cols[i++].c_str(), nullptr);
  r.min_split_margin = std::strtod(cols[i++].c_str(), nullptr);
  r.used_continuation = cols[i++] == "1";
  r.substeps = std::stoi(cols[i++]);
  r.tau_effective = std::strtod(cols[i++].c_str(), nullptr);
  return r;
}

}  // namespace

void writeVtkSnapshot(const Mesh& mesh, const State& state, const std::string& path) {
  const int dim = mesh.dim();
  std::ostringstream os;
  os << "# vtk DataFile Version 3.0\n";
  os << "thermophase state k=" << state.k << "\n";
  os << "ASCII\n";
  os << "DATASET STRUCTURED_POINTS\n";
  os << "DIMENSIONS";
  for (int i = 0; i < 3; ++i)
    os << ' ' << (i < dim ? mesh.cells()[static_cast<std::size_t>(i)] + 1 : 1);
  os << "\nORIGIN 0 0 0\n";
  os << "SPACING";
  for (int i = 0; i < 3; ++i)
    os << ' ' << (i < dim ? formatDouble(mesh.spacing()[static_cast<std::size_t>(i)]) : "1.0");
  os << "\nPOINT_DATA " << mesh.numNodes() << "\n";

  auto scalar = [&](const char* name, const Vec& f) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int n = 0; n < mesh.numNodes(); ++n)
      os << formatDouble(f[static_cast<std::size_t>(n)]) << "\n";
  };
  auto vector = [&](const char* name, const Vec& f) {
    os << "VECTORS " << name << " double\n";
    for (int n = 0; n < mesh.numNodes(); ++n) {
      for (int d = 0; d < 3; ++d)
        os << (d ? " " : "")
           << (d < dim ? formatDouble(f[static_cast<std::size_t>(n * dim + d)]) : "0.0");
      os << "\n";
    }
  };
  scalar("c", state.c);
  scalar("mu", state.mu);
  scalar("z", state.z);
  scalar("theta", state.theta);
  vector("u", state.u);
  vector("v", state.v);
  writeTextFileAtomic(path, os.str());
}

void writeSnapshot(const Mesh& mesh, const State& state, const std::string& dir,
                   const std::vector<std::string>& formats, const std::string& prefix) {
  if (formats.empty()) return;
  fs::create_directories(dir);
  for (const std::string& f : formats) {
    if (f == "csv") {
      writeFieldCsv(mesh, state.c, dir + "/" + prefix + ".c.csv");
      writeFieldCsv(mesh, state.mu, dir + "/" + prefix + ".mu.csv");
      writeFieldCsv(mesh, state.z, dir + "/" + prefix + ".z.csv");
      writeFieldCsv(mesh, state.theta, dir + "/" + prefix + ".theta.csv");
      const int dim = mesh.dim();
      for (int d = 0; d < dim; ++d) {
        Vec comp(static_cast<std::size_t>(mesh.numNodes()));
        Vec compv(static_cast<std::size_t>(mesh.numNodes()));
        for (int n = 0; n < mesh.numNodes(); ++n) {
          comp[static_cast<std::size_t>(n)] = state.u[static_cast<std::size_t>(n * dim + d)];
          compv[static_cast<std::size_t>(n)] = state.v[static_cast<std::size_t>(n * dim + d)];
        }
        const char* suffix[3] = {"x", "y", "z"};
        writeFieldCsv(mesh, comp, dir + "/" + prefix + ".u_" + suffix[d] + ".csv");
        writeFieldCsv(mesh, compv, dir + "/" + prefix + ".v_" + suffix[d] + ".csv");
      }
    } else if (f == "vtk") {
      writeVtkSnapshot(mesh, state, dir + "/" + prefix + ".vtk");
    } else {
      throw Error(ErrorCode::BadArgument, "unknown snapshot format '" + f + "'");
    }
  }
}

ArchiveWriter::ArchiveWriter(const std::string& dir, const RunConfig& cfg, const Mesh& mesh)
    : dir_(dir), config_text_(serializeConfig(cfg)), mesh_(&mesh), csv_(cfg.write_csv),
      vtk_(cfg.write_vtk), cadence_(cfg.cadence) {
  fs::create_directories(dir_ + "/states");
  writeTextFileAtomic(dir_ + "/config.ini", config_text_);
}

void ArchiveWriter::appendState(const State& state) {
  char name[64];
  std::snprintf(name, sizeof(name), "states/step_%04d.csv", states_);
  const std::string content = stateCsv(*mesh_, state);
  writeTextFileAtomic(dir_ + "/" + name, content);
  file_hashes_.emplace_back(name, fnv1a64(content));
  if (vtk_ && (states_ % cadence_ == 0)) {
    char vname[64];
    std::snprintf(vname, sizeof(vname), "states/step_%04d.vtk", states_);
    writeVtkSnapshot(*mesh_, state, dir_ + "/" + vname);
  }
  ++states_;
}

void ArchiveWriter::appendReport(const StepReport& report) { reports_.push_back(report); }

void ArchiveWriter::finalize() {
  std::string rep = reportsCsvHeader();
  for (const StepReport& r : reports_) rep += reportCsvRow(r);
  writeTextFileAtomic(dir_ + "/reports.csv", rep);

  json files = json::array();
  for (const auto& [name, hash] : file_hashes_) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, hash);
    files.push_back({{"name", name}, {"fnv64", hex}});
  }
  char chex[32];
  std::snprintf(chex, sizeof(chex), "%016" PRIx64, fnv1a64(config_text_));
  json manifest = {
      {"format", 1},
      {"config_fnv64", chex},
      {"states", states_},
      {"files", files},
      {"mesh",
       {{"dim", mesh_->dim()},
        {"extents", {mesh_->extent()[0], mesh_->extent()[1], mesh_->extent()[2]}},
        {"cells", {mesh_->cells()[0], mesh_->cells()[1], mesh_->cells()[2]}}}},
  };
  writeTextFileAtomic(dir_ + "/manifest.json", manifest.dump(2));
}

LoadedArchive readArchive(const std::string& dir) {
  const std::string manifest_text = readTextFile(dir + "/manifest.json");
  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoError, std::string("manifest.json is not valid JSON: ") + e.what());
  }

  const std::string config_text = readTextFile(dir + "/config.ini");
  char chex[32];
  std::snprintf(chex, sizeof(chex), "%016" PRIx64, fnv1a64(config_text));
  if (manifest.at("config_fnv64").get<std::string>() != chex)
    throw Error(ErrorCode::IoError, "archive config hash mismatch (config.ini was modified)");

  LoadedArchive out;
  out.config = parseConfig(config_text);

  Mesh mesh = Mesh::uniform(out.config.dim, out.config.extents, out.config.cells);
  out.trajectory.mesh = mesh;
  out.trajectory.model = out.config.material;
  out.trajectory.params = out.config.scheme;
  out.trajectory.data = DataSampler(out.config.f, out.config.g, out.config.h, out.config.uD);

  const int states = manifest.at("states").get<int>();
  const auto files = manifest.at("files");
  if (static_cast<int>(files.size()) != states)
    throw Error(ErrorCode::IoError, "archive manifest step count does not match file list");
  for (int k = 0; k < states; ++k) {
    const std::string name = files.at(static_cast<std::size_t>(k)).at("name").get<std::string>();
    const std::string content = readTextFile(dir + "/" + name);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, fnv1a64(content));
    if (files.at(static_cast<std::size_t>(k)).at("fnv64").get<std::string>() != hex)
      throw Error(ErrorCode::IoError, "archive state file hash mismatch: " + name);
    out.trajectory.states.push_back(stateFromCsv(out.trajectory.mesh, content, k));
  }

  // reports.csv (optional when the run produced no steps)
  if (fs::exists(dir + "/reports.csv")) {
    std::istringstream is(readTextFile(dir + "/reports.csv"));
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      out.trajectory.reports.push_back(reportFromCsvRow(line));
    }
  }

  if (!out.trajectory.states.empty()) {
    const State& s0 = out.trajectory.states.front();
    out.trajectory.u_ghost.resize(s0.u.size());
    for (std::size_t i = 0; i < s0.u.size(); ++i)
      out.trajectory.u_ghost[i] = s0.u[i] - out.config.tau * s0.v[i];
  }
  return out;
}

}  // namespace thermophase
