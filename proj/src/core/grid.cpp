#include "grid.hpp"

#include <cmath>

namespace thermophase {

namespace {
constexpr double kInvSqrt3 = 0.57735026918962576451;
// One-sided two-point extrapolation weight from the two Gauss layers of the
// boundary cell to the face itself.
constexpr double kExtrapRatio = 0.36602540378443864676;  // (sqrt(3)-1)/2
}  // namespace

Mesh Mesh::uniform(int dim, std::array<double, 3> extent, std::array<int, 3> cells) {
  if (dim < 1 || dim > 3) throw Error(ErrorCode::BadArgument, "mesh: dim must be 1, 2 or 3");
  Mesh m;
  m.dim_ = dim;
  m.extent_ = extent;
  m.cells_ = cells;
  m.num_cells_ = 1;
  m.num_nodes_ = 1;
  m.cell_volume_ = 1.0;
  for (int i = 0; i < 3; ++i) {
    if (i < dim) {
      if (cells[static_cast<std::size_t>(i)] < 1)
        throw Error(ErrorCode::BadArgument, "mesh: needs at least one cell per axis");
      if (extent[static_cast<std::size_t>(i)] <= 0.0)
        throw Error(ErrorCode::BadArgument, "mesh: extents must be positive");
      m.nn_[static_cast<std::size_t>(i)] = cells[static_cast<std::size_t>(i)] + 1;
      m.h_[static_cast<std::size_t>(i)] =
          extent[static_cast<std::size_t>(i)] / cells[static_cast<std::size_t>(i)];
      m.num_cells_ *= cells[static_cast<std::size_t>(i)];
      m.cell_volume_ *= m.h_[static_cast<std::size_t>(i)];
    } else {
      m.nn_[static_cast<std::size_t>(i)] = 1;
      m.cells_[static_cast<std::size_t>(i)] = 1;
      m.h_[static_cast<std::size_t>(i)] = 1.0;
      m.extent_[static_cast<std::size_t>(i)] = 1.0;
    }
    m.num_nodes_ *= m.nn_[static_cast<std::size_t>(i)];
  }
  m.nodes_per_cell_ = 1 << dim;
  m.quad_points_ = 1 << dim;
  m.quad_weight_ = m.cell_volume_ / m.quad_points_;

  // Shape values and physical gradients at the 2^d Gauss points.
  m.shape_.assign(static_cast<std::size_t>(m.quad_points_ * m.nodes_per_cell_), 0.0);
  m.grad_.assign(static_cast<std::size_t>(m.quad_points_ * m.nodes_per_cell_ * 3), 0.0);
  for (int q = 0; q < m.quad_points_; ++q) {
    double xi[3] = {0, 0, 0};
    for (int i = 0; i < dim; ++i) xi[i] = ((q >> i) & 1) ? kInvSqrt3 : -kInvSqrt3;
    for (int a = 0; a < m.nodes_per_cell_; ++a) {
      double val = 1.0;
      double fac[3] = {1.0, 1.0, 1.0};
      for (int i = 0; i < dim; ++i) {
        const double s = ((a >> i) & 1) ? 1.0 : -1.0;
        fac[i] = 0.5 * (1.0 + s * xi[i]);
        val *= fac[i];
      }
      m.shape_[static_cast<std::size_t>(q * m.nodes_per_cell_ + a)] = val;
      for (int i = 0; i < dim; ++i) {
        const double s = ((a >> i) & 1) ? 1.0 : -1.0;
        double g = 0.5 * s;
        for (int j = 0; j < dim; ++j)
          if (j != i) g *= fac[j];
        g *= 2.0 / m.h_[static_cast<std::size_t>(i)];  // reference -> physical
        m.grad_[static_cast<std::size_t>((q * m.nodes_per_cell_ + a) * 3 + i)] = g;
      }
    }
  }

  // Boundary tagging.
  m.boundary_node_.assign(static_cast<std::size_t>(m.num_nodes_), false);
  for (int n = 0; n < m.num_nodes_; ++n) {
    int rem = n;
    bool bdry = false;
    for (int i = 0; i < dim; ++i) {
      const int idx = rem % m.nn_[static_cast<std::size_t>(i)];
      rem /= m.nn_[static_cast<std::size_t>(i)];
      if (idx == 0 || idx == m.nn_[static_cast<std::size_t>(i)] - 1) bdry = true;
    }
    if (bdry) {
      m.boundary_node_[static_cast<std::size_t>(n)] = true;
      m.boundary_nodes_.push_back(n);
    }
  }

  // Boundary facets with their transverse quadrature.
  const int npf = dim == 1 ? 1 : (dim == 2 ? 2 : 4);
  for (int ax = 0; ax < dim; ++ax) {
    for (int side = 0; side < 2; ++side) {
      // iterate cells on this face
      std::array<int, 3> cc{0, 0, 0};
      const int fixed = side == 0 ? 0 : m.cells_[static_cast<std::size_t>(ax)] - 1;
      // transverse axes
      int tax[2], ntax = 0;
      for (int i = 0; i < dim; ++i)
        if (i != ax) tax[ntax++] = i;
      int tcells[2] = {1, 1};
      for (int k = 0; k < ntax; ++k) tcells[k] = m.cells_[static_cast<std::size_t>(tax[k])];
      for (int t1 = 0; t1 < tcells[1]; ++t1) {
        for (int t0 = 0; t0 < tcells[0]; ++t0) {
          cc[static_cast<std::size_t>(ax)] = fixed;
          if (ntax > 0) cc[static_cast<std::size_t>(tax[0])] = t0;
          if (ntax > 1) cc[static_cast<std::size_t>(tax[1])] = t1;
          Facet f;
          f.cell = cc[0] + m.cells_[0] * (cc[1] + m.cells_[1] * cc[2]);
          f.axis = ax;
          f.side = side;
          f.area = 1.0;
          for (int k = 0; k < ntax; ++k) f.area *= m.h_[static_cast<std::size_t>(tax[k])];
          // facet corner nodes, lexicographic in the transverse axes
          std::array<int, 3> base{cc[0], cc[1], cc[2]};
          base[static_cast<std::size_t>(ax)] += side;  // node layer on the face
          for (int loc = 0; loc < npf; ++loc) {
            std::array<int, 3> nidx = base;
            for (int k = 0; k < ntax; ++k)
              nidx[static_cast<std::size_t>(tax[k])] += (loc >> k) & 1;
            f.nodes[static_cast<std::size_t>(loc)] =
                nidx[0] + m.nn_[0] * (nidx[1] + m.nn_[1] * nidx[2]);
          }
          m.facets_.push_back(f);
        }
      }
    }
  }

  // Facet quadrature shape table ((d-1)-linear on the face).
  m.facet_shape_.assign(static_cast<std::size_t>(npf * npf), 0.0);
  m.facet_qp_.assign(static_cast<std::size_t>(npf * 2), 0.0);
  const int ntrans = dim - 1;
  for (int q = 0; q < npf; ++q) {
    double xi[2] = {0.0, 0.0};
    for (int k = 0; k < ntrans; ++k) xi[k] = ((q >> k) & 1) ? kInvSqrt3 : -kInvSqrt3;
    m.facet_qp_[static_cast<std::size_t>(q * 2 + 0)] = xi[0];
    m.facet_qp_[static_cast<std::size_t>(q * 2 + 1)] = xi[1];
    for (int a = 0; a < npf; ++a) {
      double val = 1.0;
      for (int k = 0; k < ntrans; ++k) {
        const double s = ((a >> k) & 1) ? 1.0 : -1.0;
        val *= 0.5 * (1.0 + s * xi[k]);
      }
      m.facet_shape_[static_cast<std::size_t>(q * npf + a)] = val;
    }
  }
  return m;
}

double Mesh::domainVolume() const {
  double v = 1.0;
  for (int i = 0; i < dim_; ++i) v *= extent_[static_cast<std::size_t>(i)];
  return v;
}

std::array<double, 3> Mesh::nodeCoords(int node) const {
  std::array<double, 3> x{0.0, 0.0, 0.0};
  int rem = node;
  for (int i = 0; i < dim_; ++i) {
    const int idx = rem % nn_[static_cast<std::size_t>(i)];
    rem /= nn_[static_cast<std::size_t>(i)];
    x[static_cast<std::size_t>(i)] = idx * h_[static_cast<std::size_t>(i)];
  }
  return x;
}

void Mesh::cellNodes(int cell, int* out) const {
  int rem = cell;
  int cc[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    cc[i] = rem % cells_[static_cast<std::size_t>(i)];
    rem /= cells_[static_cast<std::size_t>(i)];
  }
  for (int a = 0; a < nodes_per_cell_; ++a) {
    const int ix = cc[0] + (a & 1);
    const int iy = cc[1] + ((a >> 1) & 1);
    const int iz = cc[2] + ((a >> 2) & 1);
    out[a] = ix + nn_[0] * (iy + nn_[1] * iz);
  }
}

Vec lumpedMass(const Mesh& mesh) {
  Vec m(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  const int npc = mesh.nodesPerCell();
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  const double contrib = mesh.cellVolume() / npc;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int a = 0; a < npc; ++a) m[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])] += contrib;
  }
  return m;
}

AssembledOperator assembleMass(const Mesh& mesh) {
  const int npc = mesh.nodesPerCell();
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < mesh.quadPointsPerCell(); ++q)
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b)
          trip.emplace_back(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                            mesh.quadWeight() * mesh.shape(q, a) * mesh.shape(q, b));
  }
  AssembledOperator op;
  op.kind = "mass";
  op.matrix.resize(mesh.numNodes(), mesh.numNodes());
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  return op;
}

AssembledOperator assembleStiffness(const Mesh& mesh, double coeff) {
  const int npc = mesh.nodesPerCell();
  const int dim = mesh.dim();
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < mesh.quadPointsPerCell(); ++q)
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b) {
          double g = 0.0;
          for (int i = 0; i < dim; ++i) g += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
          trip.emplace_back(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                            coeff * mesh.quadWeight() * g);
        }
  }
  AssembledOperator op;
  op.kind = "stiffness";
  op.matrix.resize(mesh.numNodes(), mesh.numNodes());
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  return op;
}

QpScalar evaluateAtQuadPoints(const Mesh& mesh, const Vec& nodal) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  QpScalar out;
  out.value.assign(static_cast<std::size_t>(mesh.numCells() * nqp), 0.0);
  out.grad.assign(static_cast<std::size_t>(mesh.numCells() * nqp), {0.0, 0.0, 0.0});
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      for (int a = 0; a < npc; ++a) {
        const double v = nodal[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])];
        out.value[k] += mesh.shape(q, a) * v;
        for (int i = 0; i < mesh.dim(); ++i)
          out.grad[k][static_cast<std::size_t>(i)] += mesh.shapeGrad(q, a, i) * v;
      }
    }
  }
  return out;
}

QpStrain strainAtQuadPoints(const Mesh& mesh, const Vec& nodal) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  QpStrain out;
  out.strain.assign(static_cast<std::size_t>(mesh.numCells() * nqp), SymTensor(dim));
  out.div.assign(static_cast<std::size_t>(mesh.numCells() * nqp), 0.0);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      double gu[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
      for (int a = 0; a < npc; ++a)
        for (int comp = 0; comp < dim; ++comp) {
          const double v =
              nodal[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)] * dim + comp)];
          for (int i = 0; i < dim; ++i) gu[comp][i] += mesh.shapeGrad(q, a, i) * v;
        }
      SymTensor& e = out.strain[k];
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) e.set(i, j, 0.5 * (gu[i][j] + gu[j][i]));
      for (int i = 0; i < dim; ++i) out.div[k] += gu[i][i];
    }
  }
  return out;
}

Vec integrateAgainstBasis(const Mesh& mesh, const Vec& qp_values) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  Vec r(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const double wq = mesh.quadWeight() * qp_values[static_cast<std::size_t>(c * nqp + q)];
      for (int a = 0; a < npc; ++a)
        r[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])] += wq * mesh.shape(q, a);
    }
  }
  return r;
}

Vec pLaplacianResidual(const Mesh& mesh, const Vec& field, double p, double eps_p) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  Vec r(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  const QpScalar qp = evaluateAtQuadPoints(mesh, field);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      double g2 = eps_p * eps_p;
      for (int i = 0; i < dim; ++i) g2 += qp.grad[k][static_cast<std::size_t>(i)] * qp.grad[k][static_cast<std::size_t>(i)];
      const double coef = std::pow(g2, 0.5 * (p - 2.0));
      for (int a = 0; a < npc; ++a) {
        double dot = 0.0;
        for (int i = 0; i < dim; ++i)
          dot += qp.grad[k][static_cast<std::size_t>(i)] * mesh.shapeGrad(q, a, i);
        r[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])] +=
            mesh.quadWeight() * coef * dot;
      }
    }
  }
  return r;
}

SparseMat pLaplacianJacobian(const Mesh& mesh, const Vec& field, double p, double eps_p) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpScalar qp = evaluateAtQuadPoints(mesh, field);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      double g2 = eps_p * eps_p;
      for (int i = 0; i < dim; ++i) g2 += qp.grad[k][static_cast<std::size_t>(i)] * qp.grad[k][static_cast<std::size_t>(i)];
      const double coef = std::pow(g2, 0.5 * (p - 2.0));
      const double dcoef = (p - 2.0) * std::pow(g2, 0.5 * (p - 4.0));
      for (int a = 0; a < npc; ++a) {
        double da = 0.0;
        for (int i = 0; i < dim; ++i)
          da += qp.grad[k][static_cast<std::size_t>(i)] * mesh.shapeGrad(q, a, i);
        for (int b = 0; b < npc; ++b) {
          double gg = 0.0, db = 0.0;
          for (int i = 0; i < dim; ++i) {
            gg += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
            db += qp.grad[k][static_cast<std::size_t>(i)] * mesh.shapeGrad(q, b, i);
          }
          trip.emplace_back(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                            mesh.quadWeight() * (coef * gg + dcoef * da * db));
        }
      }
    }
  }
  SparseMat J(mesh.numNodes(), mesh.numNodes());
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

double pGradientEnergy(const Mesh& mesh, const Vec& field, double p, double eps_p) {
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpScalar qp = evaluateAtQuadPoints(mesh, field);
  double e = 0.0;
  for (int c = 0; c < mesh.numCells(); ++c)
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      double g2 = eps_p * eps_p;
      for (int i = 0; i < dim; ++i) g2 += qp.grad[k][static_cast<std::size_t>(i)] * qp.grad[k][static_cast<std::size_t>(i)];
      e += mesh.quadWeight() * std::pow(g2, 0.5 * p) / p;
    }
  return e;
}

Vec heatDiffusionResidual(const Mesh& mesh, const Vec& theta, const HeatModel& heat, bool use_KM,
                          const Vec& hload) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpScalar qp = evaluateAtQuadPoints(mesh, theta);
  Vec r(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      const double kv = use_KM ? evalKM(qp.value[k], heat) : evalK(qp.value[k], heat);
      for (int a = 0; a < npc; ++a) {
        double dot = 0.0;
        for (int i = 0; i < dim; ++i)
          dot += qp.grad[k][static_cast<std::size_t>(i)] * mesh.shapeGrad(q, a, i);
        r[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])] +=
            mesh.quadWeight() * kv * dot;
      }
    }
  }
  if (!hload.empty())
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= hload[i];
  return r;
}

SparseMat heatDiffusionJacobian(const Mesh& mesh, const Vec& theta, const HeatModel& heat,
                                bool use_KM) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpScalar qp = evaluateAtQuadPoints(mesh, theta);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      const double kv = use_KM ? evalKM(qp.value[k], heat) : evalK(qp.value[k], heat);
      const double kp = use_KM ? evalKMPrime(qp.value[k], heat) : evalKPrime(qp.value[k], heat);
      for (int a = 0; a < npc; ++a) {
        double da = 0.0;
        for (int i = 0; i < dim; ++i)
          da += qp.grad[k][static_cast<std::size_t>(i)] * mesh.shapeGrad(q, a, i);
        for (int b = 0; b < npc; ++b) {
          double gg = 0.0;
          for (int i = 0; i < dim; ++i) gg += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
          trip.emplace_back(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)],
                            mesh.quadWeight() * (kv * gg + kp * mesh.shape(q, b) * da));
        }
      }
    }
  }
  SparseMat J(mesh.numNodes(), mesh.numNodes());
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

SparseMat assembleViscosityMatrix(const Mesh& mesh, const Vec& a_qp, const IsotropicTensor& V) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const double coef = mesh.quadWeight() * a_qp[static_cast<std::size_t>(c * nqp + q)];
      for (int a = 0; a < npc; ++a)
        for (int b = 0; b < npc; ++b) {
          double gg = 0.0;
          for (int i = 0; i < dim; ++i) gg += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b, i);
          for (int al = 0; al < dim; ++al)
            for (int be = 0; be < dim; ++be) {
              double entry = V.lambda * mesh.shapeGrad(q, a, al) * mesh.shapeGrad(q, b, be) +
                             V.mu * mesh.shapeGrad(q, a, be) * mesh.shapeGrad(q, b, al);
              if (al == be) entry += V.mu * gg;
              trip.emplace_back(nodes[static_cast<std::size_t>(a)] * dim + al,
                                nodes[static_cast<std::size_t>(b)] * dim + be, coef * entry);
            }
        }
    }
  }
  SparseMat A(mesh.numNodes() * dim, mesh.numNodes() * dim);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

StressForms assembleStressForms(const Mesh& mesh, const Vec& c_nodal, const Vec& z_nodal,
                                const ElasticModel& elastic, const RegularizationParams& reg) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const IsotropicTensor C = elastic.stiffness();
  const QpScalar cq = evaluateAtQuadPoints(mesh, c_nodal);
  const QpScalar zq = evaluateAtQuadPoints(mesh, z_nodal);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  std::vector<Eigen::Triplet<double>> trip;
  StressForms out;
  out.eigenstrain_load.assign(static_cast<std::size_t>(mesh.numNodes() * dim), 0.0);
  const double kappa_d = C.lambda * dim + 2.0 * C.mu;  // C I = kappa_d I
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const std::size_t k = static_cast<std::size_t>(c * nqp + q);
      const double rc = smoothTruncation(cq.value[k], reg).value;
      const double b = elastic.b_model.eval(rc, zq.value[k]);
      const double coef = mesh.quadWeight() * b;
      for (int a = 0; a < npc; ++a) {
        for (int al = 0; al < dim; ++al)
          out.eigenstrain_load[static_cast<std::size_t>(
              nodes[static_cast<std::size_t>(a)] * dim + al)] +=
              coef * elastic.eigenstrain_coeff * rc * kappa_d * mesh.shapeGrad(q, a, al);
        for (int b2 = 0; b2 < npc; ++b2) {
          double gg = 0.0;
          for (int i = 0; i < dim; ++i) gg += mesh.shapeGrad(q, a, i) * mesh.shapeGrad(q, b2, i);
          for (int al = 0; al < dim; ++al)
            for (int be = 0; be < dim; ++be) {
              double entry = C.lambda * mesh.shapeGrad(q, a, al) * mesh.shapeGrad(q, b2, be) +
                             C.mu * mesh.shapeGrad(q, a, be) * mesh.shapeGrad(q, b2, al);
              if (al == be) entry += C.mu * gg;
              trip.emplace_back(nodes[static_cast<std::size_t>(a)] * dim + al,
                                nodes[static_cast<std::size_t>(b2)] * dim + be, coef * entry);
            }
        }
      }
    }
  }
  out.matrix.resize(mesh.numNodes() * dim, mesh.numNodes() * dim);
  out.matrix.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Vec thermalPressureLoad(const Mesh& mesh, const Vec& theta_nodal, double rho) {
  const int npc = mesh.nodesPerCell();
  const int nqp = mesh.quadPointsPerCell();
  const int dim = mesh.dim();
  const QpScalar tq = evaluateAtQuadPoints(mesh, theta_nodal);
  Vec load(static_cast<std::size_t>(mesh.numNodes() * dim), 0.0);
  std::vector<int> nodes(static_cast<std::size_t>(npc));
  for (int c = 0; c < mesh.numCells(); ++c) {
    mesh.cellNodes(c, nodes.data());
    for (int q = 0; q < nqp; ++q) {
      const double coef = mesh.quadWeight() * rho * tq.value[static_cast<std::size_t>(c * nqp + q)];
      for (int a = 0; a < npc; ++a)
        for (int al = 0; al < dim; ++al)
          load[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)] * dim + al)] +=
              coef * mesh.shapeGrad(q, a, al);
    }
  }
  return load;
}

Vec boundaryFluxLoad(const Mesh& mesh, const Vec& h_nodal) {
  for (int n : mesh.boundaryNodes())
    if (h_nodal[static_cast<std::size_t>(n)] < 0.0)
      throw Error(ErrorCode::NegativeBoundarySource,
                  "boundary heat source must be nonnegative");
  Vec load(static_cast<std::size_t>(mesh.numNodes()), 0.0);
  const int npf = mesh.nodesPerFacet();
  for (const Mesh::Facet& f : mesh.boundaryFacets()) {
    const double w = f.area / npf;
    for (int q = 0; q < mesh.quadPointsPerFacet(); ++q) {
      double hq = 0.0;
      for (int a = 0; a < npf; ++a)
        hq += mesh.facetShape(q, a) * h_nodal[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(a)])];
      for (int a = 0; a < npf; ++a)
        load[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(a)])] +=
            w * hq * mesh.facetShape(q, a);
    }
  }
  return load;
}

double boundaryIntegral(const Mesh& mesh, const Vec& h_nodal) {
  double s = 0.0;
  const int npf = mesh.nodesPerFacet();
  for (const Mesh::Facet& f : mesh.boundaryFacets()) {
    const double w = f.area / npf;
    for (int q = 0; q < mesh.quadPointsPerFacet(); ++q) {
      double hq = 0.0;
      for (int a = 0; a < npf; ++a)
        hq += mesh.facetShape(q, a) * h_nodal[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(a)])];
      s += w * hq;
    }
  }
  return s;
}

namespace {

// Gradient tensor of a vector field at a cell quad point.
void vectorGradientAt(const Mesh& mesh, const Vec& nodal, int cell, int q, double gu[3][3]) {
  const int npc = mesh.nodesPerCell();
  const int dim = mesh.dim();
  int nodes[8];
  mesh.cellNodes(cell, nodes);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) gu[i][j] = 0.0;
  for (int a = 0; a < npc; ++a)
    for (int comp = 0; comp < dim; ++comp) {
      const double v = nodal[static_cast<std::size_t>(nodes[a] * dim + comp)];
      for (int i = 0; i < dim; ++i) gu[comp][i] += mesh.shapeGrad(q, a, i) * v;
    }
}

}  // namespace

double boundaryStressPowerRecovered(const Mesh& mesh, const Vec& u, const Vec& u_prev,
                                    const Vec& c, const Vec& z, const Vec& c_prev,
                                    const Vec& z_prev, const Vec& theta, const Vec& d_rate,
                                    double tau, const MaterialModel& model) {
  const int dim = mesh.dim();
  const int npf = mesh.nodesPerFacet();
  const IsotropicTensor V = model.elastic.viscosity();
  double power = 0.0;

  for (const Mesh::Facet& f : mesh.boundaryFacets()) {
    const double w = f.area / npf;
    for (int fq = 0; fq < mesh.quadPointsPerFacet(); ++fq) {
      // Match this facet quad point with the two Gauss layers of the adjacent
      // cell along the facet normal and extrapolate the gradients to the face.
      int bits_t[2] = {0, 0};
      for (int k = 0; k < dim - 1; ++k) bits_t[k] = (fq >> k) & 1;
      int tax[2], ntax = 0;
      for (int i = 0; i < dim; ++i)
        if (i != f.axis) tax[ntax++] = i;
      auto cellQp = [&](int layer_bit) {
        int q = 0;
        for (int k = 0; k < ntax; ++k) q |= bits_t[k] << tax[k];
        q |= layer_bit << f.axis;
        return q;
      };
      const int near_bit = f.side == 0 ? 0 : 1;
      const int q_near = cellQp(near_bit);
      const int q_far = cellQp(1 - near_bit);

      double gn[3][3], gf[3][3], gvn[3][3], gvf[3][3];
      vectorGradientAt(mesh, u, f.cell, q_near, gn);
      vectorGradientAt(mesh, u, f.cell, q_far, gf);
      Vec v(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) v[i] = (u[i] - u_prev[i]) / tau;
      vectorGradientAt(mesh, v, f.cell, q_near, gvn);
      vectorGradientAt(mesh, v, f.cell, q_far, gvf);

      SymTensor eps_u(dim), eps_v(dim);
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
          const double gu_b = (1.0 + kExtrapRatio) * 0.5 * (gn[i][j] + gn[j][i]) -
                              kExtrapRatio * 0.5 * (gf[i][j] + gf[j][i]);
          const double gv_b = (1.0 + kExtrapRatio) * 0.5 * (gvn[i][j] + gvn[j][i]) -
                              kExtrapRatio * 0.5 * (gvf[i][j] + gvf[j][i]);
          eps_u.set(i, j, gu_b);
          eps_v.set(i, j, gv_b);
        }

      // Facet interpolation of the scalar fields.
      double cq = 0, zq = 0, cq_old = 0, zq_old = 0, tq = 0;
      for (int a = 0; a < npf; ++a) {
        const std::size_t n = static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(a)]);
        const double s = mesh.facetShape(fq, a);
        cq += s * c[n];
        zq += s * z[n];
        cq_old += s * c_prev[n];
        zq_old += s * z_prev[n];
        tq += s * theta[n];
      }

      const double a_coef = model.elastic.a_model.eval(cq_old, zq_old);
      SymTensor sigma = a_coef * V.apply(eps_v);
      sigma += evalWOmegaDerivatives(cq, eps_u, zq, model.elastic, model.reg).Weps;
      for (int i = 0; i < dim; ++i) sigma.a[static_cast<std::size_t>(i)] -= model.heat.rho * tq;

      // traction (sigma n) . d_rate
      const double nsign = f.side == 0 ? -1.0 : 1.0;
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) {
        double drate_q = 0.0;
        for (int a = 0; a < npf; ++a)
          drate_q += mesh.facetShape(fq, a) *
                     d_rate[static_cast<std::size_t>(f.nodes[static_cast<std::size_t>(a)] * dim + i)];
        dot += nsign * sigma.comp(f.axis, i) * drate_q;
      }
      power += w * dot;
    }
  }
  return power;
}

}  // namespace thermophase
