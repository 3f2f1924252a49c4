// P1 finite elements with backward Euler for u_t - div(kappa lambda grad u) = g in fractured media,
// zero Neumann boundary. Fractures enter as 1-D P1 elements on fine edges scaled by the aperture.

#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dmml/fields.hpp"
#include "dmml/mesh.hpp"

namespace dmml {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Local P1 stiffness of a triangle with constant coefficient.
Eigen::Matrix3d p1_stiffness(Point p0, Point p1, Point p2, double coefficient);

/// Stiffness with mobility sampled at element / edge midpoints at time t.
/// Throws std::domain_error on a nonpositive mobility sample.
SparseMatrix assemble_stiffness(const Geometry& geometry, const MobilityField& mobility, double t);

/// Row-lumped mass: area/3 per triangle vertex plus aperture*h/2 per fracture edge endpoint.
Vector assemble_lumped_mass(const Geometry& geometry);
SparseMatrix assemble_mass(const Geometry& geometry);

/// Lumped load with the source sampled at triangle centroids and fracture edge midpoints.
Vector assemble_load(const Geometry& geometry, const SourceField& source, int step);

class FineSolver {
 public:
  FineSolver(const Geometry& geometry, MobilityField mobility, double dt);

  /// Advances u^{k+1} -> u^{k+2} using (M + dt A(t_{k+1})) u = dt b_k + M u.
  Vector step(const Vector& u, const SourceField& source, int step);

  const Vector& mass() const { return mass_; }
  double dt() const { return dt_; }
  /// Relative residual of the last solve.
  double last_residual() const { return last_residual_; }

 private:
  using Factorization = Eigen::SimplicialLDLT<SparseMatrix>;

  const Geometry& geometry_;
  MobilityField mobility_;
  double dt_;
  Vector mass_;
  SparseMatrix system_;
  std::unique_ptr<Factorization> solver_;
  int factored_step_ = -1;
  double last_residual_ = 0.0;

  void factor(int step);
};

/// Returns u^1 .. u^{n_steps+1}.
std::vector<Vector> solve_fine(const Geometry& geometry, const MobilityField& mobility,
                               const SourceField& source, const Vector& initial, int n_steps, double dt);

}  // namespace dmml
