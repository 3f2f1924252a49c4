// Non-local multi-continuum upscaling.
//
// Each coarse continuum (the matrix of a block, or one fracture piece inside it) gets a basis
// function that minimizes the energy a(psi, psi) over its oversampled region subject to mean-value
// constraints: mean 1 on its own continuum and 0 on every other continuum of the region. Energy
// products of these functions give the transmissibilities that couple the continuum averages.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dmml/fields.hpp"
#include "dmml/fine_solver.hpp"
#include "dmml/mesh.hpp"

namespace dmml {

/// Rows are the continuum mean functionals: (C u)_p is the mean of u over continuum p
/// (area mean over the block for matrix continua, arc-length mean for fracture pieces).
SparseMatrix continuum_functionals(const Geometry& geometry);
Vector continuum_average(const Geometry& geometry, const Vector& fine_state);

/// Basis functions of the continua of one coarse block.
struct BlockBasis {
  int block = 0;
  std::vector<int> dofs;              // continua owned by the block (matrix first)
  std::vector<int> constraint_dofs;   // continua constrained in the region (zero rows dropped)
  std::vector<int> nodes;             // free fine nodes of the region (global ids)
  Eigen::MatrixXd values;             // nodes.size() x dofs.size()
  Eigen::MatrixXd multipliers;        // constraint_dofs.size() x dofs.size()
  double constraint_residual = 0.0;   // max |C psi - e|
};

/// Solves the local constrained energy minimization on `region` with zero values on the part of
/// the region boundary interior to the domain. `stiffness` is the global fine stiffness matrix.
/// Throws std::runtime_error if the constraint block is rank deficient.
BlockBasis build_basis(const Geometry& geometry, const OversampleRegion& region, const SparseMatrix& stiffness);

struct BasisSet {
  int layers = 0;
  double snapshot_time = 0.0;
  std::uint64_t geometry_hash = 0;
  SparseMatrix psi;  // fine vertices x continua
  std::vector<BlockBasis> blocks;
  double max_constraint_residual = 0.0;
};

BasisSet build_basis_set(const Geometry& geometry, const SparseMatrix& stiffness, double snapshot_time,
                         int layers);

struct CoarseSystem {
  SparseMatrix transmissibility;  // T: Galerkin energy products a(psi_p, psi_q)
  SparseMatrix stiffness;         // A_T: off-diagonal t_pq, diagonal -sum_{q != p} t_pq
  Vector mass;                    // diagonal of M_T (continuum measures)
  int layers = 0;
  double snapshot_time = 0.0;
};

/// Throws std::invalid_argument if the stiffness was assembled at a different time than the basis
/// snapshot or the basis belongs to a different geometry.
CoarseSystem assemble_transmissibility(const Geometry& geometry, const BasisSet& basis,
                                       const SparseMatrix& stiffness, double stiffness_time);

Vector coarse_mass(const Geometry& geometry);
/// (b_T)_p = integral of g over continuum p (midpoint rule on fine cells and fracture edges).
Vector assemble_coarse_load(const Geometry& geometry, const SourceField& source, int step);

/// DOFs whose home block lies within Chebyshev distance `radius` of the home block of `dof`.
std::vector<int> region_of_influence(const Geometry& geometry, int dof, int radius);

enum class BasisUpdate { frozen, per_step };

/// Coarse operators for every time level of an experiment. Mobility does not depend on the source,
/// so the operators and their factorizations are shared by all trajectories.
class CoarseModel {
 public:
  CoarseModel(const Geometry& geometry, const MobilityField& mobility, int layers, double dt, int n_steps,
              BasisUpdate update = BasisUpdate::frozen);

  int size() const { return geometry_->index.size(); }
  int steps() const { return n_steps_; }
  double dt() const { return dt_; }
  int layers() const { return layers_; }
  const Geometry& geometry() const { return *geometry_; }
  /// Operators used to advance from state k+1 to state k+2.
  const CoarseSystem& system(int step) const;
  const BasisSet& basis(int step) const;

  Vector load(const SourceField& source, int step) const { return assemble_coarse_load(*geometry_, source, step); }
  /// Solves (M_T + dt A_T) u^{k+2} = dt b_T + M_T u^{k+1}. Thread safe.
  Vector step(const Vector& state, const Vector& load, int step) const;
  /// Returns u^1 .. u^{n_steps+1}.
  std::vector<Vector> trajectory(const SourceField& source, const Vector& initial) const;

 private:
  const Geometry* geometry_;
  double dt_;
  int n_steps_;
  int layers_;
  std::vector<BasisSet> bases_;
  std::vector<CoarseSystem> systems_;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> solvers_;
  std::vector<Eigen::MatrixXd> operators_;

  std::size_t level(int step) const { return systems_.size() == 1 ? 0 : static_cast<std::size_t>(step); }
};

/// One backward Euler step with explicitly supplied operators.
Vector coarse_step(const CoarseSystem& system, const Vector& state, const Vector& load, double dt);

}  // namespace dmml
