#include "dmml/fine_solver.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dmml {

namespace {

constexpr double kResidualTol = 1e-10;

double checked_mobility(const MobilityField& mobility, double t, Point x) {
  const double lam = mobility(t, x);
  if (!(lam > 0.0)) {
    std::ostringstream os;
    os << "nonpositive mobility " << lam << " at (" << x.x << "," << x.y << "), t=" << t;
    throw std::domain_error(os.str());
  }
  return lam;
}

}  // namespace

Eigen::Matrix3d p1_stiffness(Point p0, Point p1, Point p2, double coefficient) {
  const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
  const double area = 0.5 * std::abs(det);
  // Gradients of the barycentric coordinates scaled by det.
  Eigen::Matrix<double, 3, 2> grad;
  grad << p1.y - p2.y, p2.x - p1.x,  //
      p2.y - p0.y, p0.x - p2.x,      //
      p0.y - p1.y, p1.x - p0.x;
  return coefficient * area / (det * det) * (grad * grad.transpose());
}

SparseMatrix assemble_stiffness(const Geometry& geometry, const MobilityField& mobility, double t) {
  const auto& fm = geometry.fine;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(9 * fm.triangles.size() + 4 * fm.fracture_edges.size());

  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const auto& v = fm.triangles[tri];
    const double coef =
        fm.triangle_permeability[tri] * checked_mobility(mobility, t, fm.triangle_centroid(tri));
    const Eigen::Matrix3d k = p1_stiffness(fm.vertices[v[0]], fm.vertices[v[1]], fm.vertices[v[2]], coef);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) triplets.emplace_back(v[a], v[b], k(a, b));
  }
  for (const auto& e : fm.fracture_edges) {
    const auto& f = geometry.spec.network.fractures[e.fracture];
    const double c = f.aperture * f.permeability * checked_mobility(mobility, t, fm.edge_midpoint(e)) / e.length;
    triplets.emplace_back(e.a, e.a, c);
    triplets.emplace_back(e.b, e.b, c);
    triplets.emplace_back(e.a, e.b, -c);
    triplets.emplace_back(e.b, e.a, -c);
  }

  SparseMatrix a(fm.vertex_count(), fm.vertex_count());
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

Vector assemble_lumped_mass(const Geometry& geometry) {
  const auto& fm = geometry.fine;
  Vector m = Vector::Zero(fm.vertex_count());
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const double share = fm.triangle_area(tri) / 3.0;
    for (int v : fm.triangles[tri]) m[v] += share;
  }
  for (const auto& e : fm.fracture_edges) {
    const double share = 0.5 * geometry.spec.network.fractures[e.fracture].aperture * e.length;
    m[e.a] += share;
    m[e.b] += share;
  }
  return m;
}

SparseMatrix assemble_mass(const Geometry& geometry) {
  const Vector m = assemble_lumped_mass(geometry);
  SparseMatrix out(m.size(), m.size());
  out.reserve(Eigen::VectorXi::Constant(m.size(), 1));
  for (Eigen::Index i = 0; i < m.size(); ++i) out.insert(i, i) = m[i];
  out.makeCompressed();
  return out;
}

Vector assemble_load(const Geometry& geometry, const SourceField& source, int step) {
  const auto& fm = geometry.fine;
  Vector b = Vector::Zero(fm.vertex_count());
  if (source.kind() == SourceField::Kind::zero) return b;
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const double g = source(step, fm.triangle_centroid(tri));
    if (g == 0.0) continue;
    const double share = g * fm.triangle_area(tri) / 3.0;
    for (int v : fm.triangles[tri]) b[v] += share;
  }
  for (const auto& e : fm.fracture_edges) {
    const double g = source(step, fm.edge_midpoint(e));
    if (g == 0.0) continue;
    const double share = 0.5 * g * geometry.spec.network.fractures[e.fracture].aperture * e.length;
    b[e.a] += share;
    b[e.b] += share;
  }
  return b;
}

FineSolver::FineSolver(const Geometry& geometry, MobilityField mobility, double dt)
    : geometry_(geometry), mobility_(mobility), dt_(dt), mass_(assemble_lumped_mass(geometry)) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
}

void FineSolver::factor(int step) {
  const double t = (step + 1) * dt_;
  system_ = dt_ * assemble_stiffness(geometry_, mobility_, t);
  system_.diagonal() += mass_;
  solver_ = std::make_unique<Factorization>(system_);
  if (solver_->info() != Eigen::Success) throw std::runtime_error("fine solver: factorization failed");
  factored_step_ = step;
}

Vector FineSolver::step(const Vector& u, const SourceField& source, int step) {
  if (u.size() != mass_.size()) throw std::invalid_argument("fine state has wrong length");
  if (!solver_ || (mobility_.time_dependent() && factored_step_ != step)) factor(step);

  Vector rhs = mass_.cwiseProduct(u);
  if (source.kind() != SourceField::Kind::zero) rhs += dt_ * assemble_load(geometry_, source, step);
  Vector next = solver_->solve(rhs);
  if (solver_->info() != Eigen::Success) throw std::runtime_error("fine solver: solve failed");

  const double rhs_norm = rhs.norm();
  last_residual_ = rhs_norm > 0.0 ? (system_ * next - rhs).norm() / rhs_norm : (system_ * next).norm();
  if (!(last_residual_ <= kResidualTol)) {
    std::ostringstream os;
    os << "fine solver: relative residual " << last_residual_ << " exceeds tolerance at step " << step;
    throw std::runtime_error(os.str());
  }
  return next;
}

std::vector<Vector> solve_fine(const Geometry& geometry, const MobilityField& mobility,
                               const SourceField& source, const Vector& initial, int n_steps, double dt) {
  if (n_steps < 1) throw std::invalid_argument("solve_fine: n_steps must be at least 1");
  FineSolver solver(geometry, mobility, dt);
  std::vector<Vector> states{initial};
  states.reserve(n_steps + 1);
  for (int k = 0; k < n_steps; ++k) states.push_back(solver.step(states.back(), source, k));
  return states;
}

}  // namespace dmml
