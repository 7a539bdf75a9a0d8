#pragma once

#include <Eigen/Sparse>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "error.hpp"
#include "material.hpp"
#include "tensor.hpp"

namespace thermophase {

/// Uniform tensor-product grid with multilinear elements and 2-point Gauss
/// quadrature per axis. Node ordering is lexicographic, x fastest.
class Mesh {
 public:
  static Mesh uniform(int dim, std::array<double, 3> extent, std::array<int, 3> cells);

  int dim() const { return dim_; }
  const std::array<double, 3>& extent() const { return extent_; }
  const std::array<int, 3>& cells() const { return cells_; }
  const std::array<double, 3>& spacing() const { return h_; }

  int numNodes() const { return num_nodes_; }
  int numCells() const { return num_cells_; }
  int nodesPerCell() const { return nodes_per_cell_; }
  int quadPointsPerCell() const { return quad_points_; }

  double cellVolume() const { return cell_volume_; }
  double domainVolume() const;

  std::array<double, 3> nodeCoords(int node) const;
  bool isBoundaryNode(int node) const { return boundary_node_[static_cast<std::size_t>(node)]; }
  const std::vector<int>& boundaryNodes() const { return boundary_nodes_; }

  /// Global node indices of a cell's corners (lexicographic local order).
  void cellNodes(int cell, int* out) const;

  // Reference quadrature data, identical for every cell.
  double quadWeight() const { return quad_weight_; }
  double shape(int qp, int local) const { return shape_[static_cast<std::size_t>(qp * nodes_per_cell_ + local)]; }
  double shapeGrad(int qp, int local, int axis) const {
    return grad_[static_cast<std::size_t>((qp * nodes_per_cell_ + local) * 3 + axis)];
  }

  struct Facet {
    int cell = 0;                  // adjacent cell
    int axis = 0;                  // normal axis
    int side = 0;                  // 0 = low face, 1 = high face
    std::array<int, 4> nodes{};    // facet corner nodes (2^(d-1) used)
    double area = 0.0;             // facet measure
  };
  const std::vector<Facet>& boundaryFacets() const { return facets_; }
  int nodesPerFacet() const { return dim_ == 1 ? 1 : (dim_ == 2 ? 2 : 4); }
  int quadPointsPerFacet() const { return nodesPerFacet(); }
  /// Shape value of facet-local node `local` at facet quad point `qp`.
  double facetShape(int qp, int local) const {
    return facet_shape_[static_cast<std::size_t>(qp * nodesPerFacet() + local)];
  }
  /// Reference coordinate (in [-1,1]) of facet quad point along facet axis k.
  double facetQuadCoord(int qp, int k) const {
    return facet_qp_[static_cast<std::size_t>(qp * 2 + k)];
  }

 private:
  int dim_ = 2;
  std::array<double, 3> extent_{1.0, 1.0, 1.0};
  std::array<int, 3> cells_{1, 1, 1};
  std::array<double, 3> h_{1.0, 1.0, 1.0};
  std::array<int, 3> nn_{2, 1, 1};  // nodes per axis
  int num_nodes_ = 0;
  int num_cells_ = 0;
  int nodes_per_cell_ = 0;
  int quad_points_ = 0;
  double cell_volume_ = 0.0;
  double quad_weight_ = 0.0;
  std::vector<double> shape_;
  std::vector<double> grad_;
  std::vector<bool> boundary_node_;
  std::vector<int> boundary_nodes_;
  std::vector<Facet> facets_;
  std::vector<double> facet_shape_;
  std::vector<double> facet_qp_;
};

using Vec = std::vector<double>;
using SparseMat = Eigen::SparseMatrix<double>;

/// Tagged sparse operator (mass, stiffness, viscosity, ...).
struct AssembledOperator {
  SparseMat matrix;
  std::string kind;
};

/// Nodal control volumes (row sums of the mass matrix).
Vec lumpedMass(const Mesh& mesh);

AssembledOperator assembleMass(const Mesh& mesh);

/// Constant-coefficient stiffness  int grad(w) . grad(psi).
AssembledOperator assembleStiffness(const Mesh& mesh, double coeff = 1.0);

/// Values and gradients of a scalar nodal field at the quadrature points of
/// every cell, cached as flat arrays (cell-major).
struct QpScalar {
  Vec value;
  std::vector<std::array<double, 3>> grad;
};
QpScalar evaluateAtQuadPoints(const Mesh& mesh, const Vec& nodal);

/// Strain and divergence of a vector nodal field at quadrature points.
struct QpStrain {
  std::vector<SymTensor> strain;
  Vec div;
};
QpStrain strainAtQuadPoints(const Mesh& mesh, const Vec& nodal);

/// int_Omega q psi_i dx for a quantity given at quadrature points.
Vec integrateAgainstBasis(const Mesh& mesh, const Vec& qp_values);

/// p-Laplacian residual r_i = int (|grad v|^2 + eps^2)^((p-2)/2) grad v . grad psi_i
Vec pLaplacianResidual(const Mesh& mesh, const Vec& field, double p, double eps_p);
SparseMat pLaplacianJacobian(const Mesh& mesh, const Vec& field, double p, double eps_p);
/// int (1/p) (|grad v|^2 + eps^2)^(p/2)
double pGradientEnergy(const Mesh& mesh, const Vec& field, double p, double eps_p);

/// Heat diffusion with K or its truncation K_M:
/// r_i = int K(theta) grad theta . grad psi_i - hload_i.
Vec heatDiffusionResidual(const Mesh& mesh, const Vec& theta, const HeatModel& heat, bool use_KM,
                          const Vec& hload);
SparseMat heatDiffusionJacobian(const Mesh& mesh, const Vec& theta, const HeatModel& heat,
                                bool use_KM);

/// Vector-valued elastic operators. Vector dofs are node-major (node*dim+comp).
/// Viscosity matrix: int a_qp V eps(w) : eps(psi).
SparseMat assembleViscosityMatrix(const Mesh& mesh, const Vec& a_qp, const IsotropicTensor& V);
/// Stress matrix int b C eps(w):eps(psi) and eigenstrain load int b C eps*(c):eps(psi),
/// with b and eps* evaluated through the truncated concentration.
struct StressForms {
  SparseMat matrix;
  Vec eigenstrain_load;
};
StressForms assembleStressForms(const Mesh& mesh, const Vec& c_nodal, const Vec& z_nodal,
                                const ElasticModel& elastic, const RegularizationParams& reg);
/// Load rho * int Theta div(psi_i) with Theta the interpolant of nodal values.
Vec thermalPressureLoad(const Mesh& mesh, const Vec& theta_nodal, double rho);

/// Boundary flux load int_bdry h psi_i dS from nodal h (interpolated on facets).
/// Throws NegativeBoundarySource when any sampled boundary value is negative.
Vec boundaryFluxLoad(const Mesh& mesh, const Vec& h_nodal);
/// Total boundary integral of nodal data (sum of the load entries).
double boundaryIntegral(const Mesh& mesh, const Vec& h_nodal);

/// Boundary stress power int_bdry (sigma n) . d_rate dS with sigma built from
/// one-sided two-point gradient extrapolation at the boundary quad points.
double boundaryStressPowerRecovered(const Mesh& mesh, const Vec& u, const Vec& u_prev,
                                    const Vec& c, const Vec& z, const Vec& c_prev,
                                    const Vec& z_prev, const Vec& theta, const Vec& d_rate,
                                    double tau, const MaterialModel& model);

}  // namespace thermophase
