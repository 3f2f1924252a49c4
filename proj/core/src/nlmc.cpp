#include "dmml/nlmc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dmml {

namespace {

constexpr double kResidualTol = 1e-10;
constexpr double kRankTol = 1e-13;
constexpr int kTransmissibilityBits = 40;

std::string region_name(const OversampleRegion& r) {
  std::ostringstream os;
  os << "oversampling region of block " << r.center << " (rows " << r.row0 << "-" << r.row1 << ", cols "
     << r.col0 << "-" << r.col1 << ")";
  return os.str();
}

}  // namespace

SparseMatrix continuum_functionals(const Geometry& geometry) {
  const auto& fm = geometry.fine;
  const auto& idx = geometry.index;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(3 * fm.triangles.size() + 2 * fm.fracture_edges.size());

  const double block_area = geometry.coarse.block_area();
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const int dof = idx.matrix_dof[fm.triangle_block[tri]];
    const double w = fm.triangle_area(tri) / (3.0 * block_area);
    for (int v : fm.triangles[tri]) triplets.emplace_back(dof, v, w);
  }
  std::vector<double> piece_length(idx.size(), 0.0);
  for (std::size_t e = 0; e < fm.fracture_edges.size(); ++e)
    piece_length[idx.edge_dof[e]] += fm.fracture_edges[e].length;
  for (std::size_t e = 0; e < fm.fracture_edges.size(); ++e) {
    const auto& edge = fm.fracture_edges[e];
    const int dof = idx.edge_dof[e];
    const double w = 0.5 * edge.length / piece_length[dof];
    triplets.emplace_back(dof, edge.a, w);
    triplets.emplace_back(dof, edge.b, w);
  }
  SparseMatrix c(idx.size(), fm.vertex_count());
  c.setFromTriplets(triplets.begin(), triplets.end());
  return c;
}

Vector continuum_average(const Geometry& geometry, const Vector& fine_state) {
  return continuum_functionals(geometry) * fine_state;
}

namespace {

// `ft` holds the continuum functionals as columns.
BlockBasis build_basis_impl(const Geometry& geometry, const OversampleRegion& region, const SparseMatrix& stiffness,
                            const SparseMatrix& ft) {
  const auto& idx = geometry.index;
  const int n_fine = geometry.fine.vertex_count();
  if (stiffness.rows() != n_fine || stiffness.cols() != n_fine)
    throw std::invalid_argument("build_basis: stiffness does not match the fine mesh");

  BlockBasis out;
  out.block = region.center;
  out.dofs = idx.block_dofs(region.center);
  out.nodes = region.free_nodes;

  std::vector<int> local(n_fine, -1);
  for (std::size_t i = 0; i < out.nodes.size(); ++i) local[out.nodes[i]] = static_cast<int>(i);
  const int n_local = static_cast<int>(out.nodes.size());

  // Local stiffness on free nodes. Rows of free nodes only see elements inside the region.
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < n_local; ++i) {
    for (SparseMatrix::InnerIterator it(stiffness, out.nodes[i]); it; ++it) {
      const int j = local[it.row()];
      if (j >= 0) triplets.emplace_back(j, i, it.value());
    }
  }
  SparseMatrix a_loc(n_local, n_local);
  a_loc.setFromTriplets(triplets.begin(), triplets.end());

  // Mean-value constraint rows restricted to free nodes; all-zero rows are dropped unless targeted.
  std::vector<Eigen::Triplet<double>> ctrip;
  std::vector<int> target_row(out.dofs.size(), -1);
  for (int b : region.blocks) {
    for (int dof : idx.block_dofs(b)) {
      const int row = static_cast<int>(out.constraint_dofs.size());
      bool any = false;
      for (SparseMatrix::InnerIterator it(ft, dof); it; ++it) {
        const int j = local[it.row()];
        if (j >= 0 && it.value() != 0.0) {
          ctrip.emplace_back(row, j, it.value());
          any = true;
        }
      }
      const auto own = std::find(out.dofs.begin(), out.dofs.end(), dof);
      if (!any) {
        if (own != out.dofs.end())
          throw std::runtime_error("build_basis: continuum " + std::to_string(dof) +
                                   " has no free nodes in the " + region_name(region));
        continue;
      }
      if (own != out.dofs.end()) target_row[own - out.dofs.begin()] = row;
      out.constraint_dofs.push_back(dof);
    }
  }
  const int n_con = static_cast<int>(out.constraint_dofs.size());
  SparseMatrix c(n_con, n_local);
  c.setFromTriplets(ctrip.begin(), ctrip.end());

  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n_con, static_cast<Eigen::Index>(out.dofs.size()));
  for (std::size_t m = 0; m < out.dofs.size(); ++m) targets(target_row[m], static_cast<Eigen::Index>(m)) = 1.0;

  // Without Dirichlet nodes the local operator has constants in its kernel; the augmented operator
  // A + gamma C^T C is then SPD and yields the same minimizer.
  const bool pinned = region.free_nodes.size() < region.nodes.size();
  double gamma = 0.0;
  SparseMatrix op = a_loc;
  if (!pinned) {
    const SparseMatrix ctc = SparseMatrix(c.transpose()) * c;
    gamma = a_loc.diagonal().maxCoeff() / ctc.diagonal().maxCoeff();
    op = a_loc + gamma * ctc;
  }
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(op);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("build_basis: local factorization failed in the " + region_name(region));

  const Eigen::MatrixXd ct = Eigen::MatrixXd(c.transpose());
  const Eigen::MatrixXd z = ldlt.solve(ct);
  const Eigen::MatrixXd schur = c * z;
  Eigen::LDLT<Eigen::MatrixXd> schur_ldlt(schur);
  const Eigen::VectorXd pivots = schur_ldlt.vectorD();
  if (schur_ldlt.info() != Eigen::Success || pivots.minCoeff() <= kRankTol * pivots.cwiseAbs().maxCoeff())
    throw std::runtime_error("build_basis: rank-deficient constraint block in the " + region_name(region));

  const Eigen::MatrixXd weights = schur_ldlt.solve(targets);
  out.values = z * weights;
  out.multipliers = pinned ? Eigen::MatrixXd(-weights) : Eigen::MatrixXd(gamma * targets - weights);
  out.constraint_residual = (c * out.values - targets).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace

BlockBasis build_basis(const Geometry& geometry, const OversampleRegion& region, const SparseMatrix& stiffness) {
  return build_basis_impl(geometry, region, stiffness, continuum_functionals(geometry).transpose());
}

BasisSet build_basis_set(const Geometry& geometry, const SparseMatrix& stiffness, double snapshot_time,
                         int layers) {
  BasisSet set;
  set.layers = layers;
  set.snapshot_time = snapshot_time;
  set.geometry_hash = geometry.hash;
  const SparseMatrix ft = continuum_functionals(geometry).transpose();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int b = 0; b < geometry.coarse.block_count(); ++b) {
    BlockBasis bb = build_basis_impl(geometry, oversample(geometry, b, layers), stiffness, ft);
    for (Eigen::Index m = 0; m < bb.values.cols(); ++m)
      for (Eigen::Index i = 0; i < bb.values.rows(); ++i)
        triplets.emplace_back(bb.nodes[i], bb.dofs[m], bb.values(i, m));
    set.max_constraint_residual = std::max(set.max_constraint_residual, bb.constraint_residual);
    set.blocks.push_back(std::move(bb));
  }
  set.psi.resize(geometry.fine.vertex_count(), geometry.index.size());
  set.psi.setFromTriplets(triplets.begin(), triplets.end());
  return set;
}

CoarseSystem assemble_transmissibility(const Geometry& geometry, const BasisSet& basis,
                                       const SparseMatrix& stiffness, double stiffness_time) {
  if (basis.geometry_hash != geometry.hash)
    throw std::invalid_argument("assemble_transmissibility: basis built for a different geometry");
  if (stiffness_time != basis.snapshot_time)
    throw std::invalid_argument("assemble_transmissibility: stiffness time does not match the basis mobility snapshot");

  CoarseSystem sys;
  sys.layers = basis.layers;
  sys.snapshot_time = basis.snapshot_time;
  const SparseMatrix a_psi = stiffness * basis.psi;
  sys.transmissibility = SparseMatrix(basis.psi.transpose()) * a_psi;
  sys.transmissibility.makeCompressed();

  // Off-diagonals are symmetrized and rounded to a binary grid kTransmissibilityBits below the largest entry.
  const int n = geometry.index.size();
  const SparseMatrix sym = 0.5 * (sys.transmissibility + SparseMatrix(sys.transmissibility.transpose()));
  double largest = 0.0;
  for (int q = 0; q < sym.outerSize(); ++q)
    for (SparseMatrix::InnerIterator it(sym, q); it; ++it)
      if (it.row() != it.col()) largest = std::max(largest, std::abs(it.value()));
  const double grid = largest > 0.0 ? std::ldexp(1.0, std::ilogb(largest) + 1 - kTransmissibilityBits) : 1.0;

  Vector off_sum = Vector::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  for (int q = 0; q < sym.outerSize(); ++q)
    for (SparseMatrix::InnerIterator it(sym, q); it; ++it)
      if (it.row() != it.col()) {
        const double t = std::nearbyint(it.value() / grid) * grid;
        if (t == 0.0) continue;
        triplets.emplace_back(static_cast<int>(it.row()), q, t);
        off_sum[it.row()] += t;
      }
  for (int p = 0; p < n; ++p) triplets.emplace_back(p, p, -off_sum[p]);
  sys.stiffness.resize(n, n);
  sys.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  sys.mass = coarse_mass(geometry);
  return sys;
}

Vector coarse_mass(const Geometry& geometry) {
  Vector m(geometry.index.size());
  for (int p = 0; p < geometry.index.size(); ++p) m[p] = geometry.continuum_measure(p);
  return m;
}

Vector assemble_coarse_load(const Geometry& geometry, const SourceField& source, int step) {
  const auto& fm = geometry.fine;
  const auto& idx = geometry.index;
  Vector b = Vector::Zero(idx.size());
  if (source.kind() == SourceField::Kind::zero) return b;
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const double g = source(step, fm.triangle_centroid(tri));
    if (g != 0.0) b[idx.matrix_dof[fm.triangle_block[tri]]] += g * fm.triangle_area(tri);
  }
  for (std::size_t e = 0; e < fm.fracture_edges.size(); ++e) {
    const auto& edge = fm.fracture_edges[e];
    const double g = source(step, fm.edge_midpoint(edge));
    if (g != 0.0)
      b[idx.edge_dof[e]] += g * geometry.spec.network.fractures[edge.fracture].aperture * edge.length;
  }
  return b;
}

std::vector<int> region_of_influence(const Geometry& geometry, int dof, int radius) {
  if (dof < 0 || dof >= geometry.index.size()) throw std::out_of_range("region_of_influence: invalid dof");
  if (radius < 0) throw std::invalid_argument("region_of_influence: negative radius");
  const int home = geometry.index.dofs[dof].block;
  std::vector<int> out;
  for (int q = 0; q < geometry.index.size(); ++q)
    if (geometry.coarse.distance(home, geometry.index.dofs[q].block) <= radius) out.push_back(q);
  return out;
}

Vector coarse_step(const CoarseSystem& system, const Vector& state, const Vector& load, double dt) {
  Eigen::MatrixXd op = dt * Eigen::MatrixXd(system.stiffness);
  op.diagonal() += system.mass;
  const Vector rhs = dt * load + system.mass.cwiseProduct(state);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(op);
  Vector next = lu.solve(rhs);
  const double rn = rhs.norm();
  const double res = rn > 0.0 ? (op * next - rhs).norm() / rn : (op * next).norm();
  if (!(res <= kResidualTol)) throw std::runtime_error("coarse_step: residual above tolerance");
  return next;
}

CoarseModel::CoarseModel(const Geometry& geometry, const MobilityField& mobility, int layers, double dt,
                         int n_steps, BasisUpdate update)
    : geometry_(&geometry), dt_(dt), n_steps_(n_steps), layers_(layers) {
  if (!(dt > 0.0)) throw std::invalid_argument("CoarseModel: time step must be positive");
  if (n_steps < 1) throw std::invalid_argument("CoarseModel: n_steps must be at least 1");
  const bool per_step = update == BasisUpdate::per_step && mobility.time_dependent();
  const int levels = per_step ? n_steps : 1;
  for (int k = 0; k < levels; ++k) {
    const double t = per_step ? (k + 1) * dt : 0.0;
    const SparseMatrix a = assemble_stiffness(geometry, mobility, t);
    bases_.push_back(build_basis_set(geometry, a, t, layers));
    systems_.push_back(assemble_transmissibility(geometry, bases_.back(), a, t));
    Eigen::MatrixXd op = dt * Eigen::MatrixXd(systems_.back().stiffness);
    op.diagonal() += systems_.back().mass;
    solvers_.emplace_back(op);
    operators_.push_back(std::move(op));
  }
}

const CoarseSystem& CoarseModel::system(int step) const { return systems_.at(level(step)); }
const BasisSet& CoarseModel::basis(int step) const { return bases_.at(level(step)); }

Vector CoarseModel::step(const Vector& state, const Vector& load, int step) const {
  if (state.size() != size() || load.size() != size()) throw std::invalid_argument("coarse state has wrong length");
  const std::size_t l = level(step);
  const Vector rhs = dt_ * load + systems_[l].mass.cwiseProduct(state);
  Vector next = solvers_[l].solve(rhs);
  const double rn = rhs.norm();
  const double res = rn > 0.0 ? (operators_[l] * next - rhs).norm() / rn : (operators_[l] * next).norm();
  if (!(res <= kResidualTol)) {
    std::ostringstream os;
    os << "coarse step " << step << ": relative residual " << res << " above tolerance";
    throw std::runtime_error(os.str());
  }
  return next;
}

std::vector<Vector> CoarseModel::trajectory(const SourceField& source, const Vector& initial) const {
  std::vector<Vector> states{initial};
  states.reserve(n_steps_ + 1);
  for (int k = 0; k < n_steps_; ++k) states.push_back(step(states.back(), load(source, k), k));
  return states;
}

}  // namespace dmml
