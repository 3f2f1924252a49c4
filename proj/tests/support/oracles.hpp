// Dense reference assemblies for the fine-scale operators.

#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "dmml/fine_solver.hpp"

namespace dmml::oracle {

// Independent dense assembly: gradients from the inverse of the vertex coordinate matrix.
inline Eigen::MatrixXd oracle_stiffness(const Geometry& g, const MobilityField& mob, double t) {
  const auto& fm = g.fine;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(fm.vertex_count(), fm.vertex_count());
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const auto& v = fm.triangles[tri];
    Eigen::Matrix3d coords;
    for (int i = 0; i < 3; ++i) coords.row(i) << 1.0, fm.vertices[v[i]].x, fm.vertices[v[i]].y;
    const Eigen::Matrix3d inv = coords.inverse();  // column i holds (a, b, c) of basis function i
    const double area = 0.5 * std::abs(coords.determinant());
    const Point c{(fm.vertices[v[0]].x + fm.vertices[v[1]].x + fm.vertices[v[2]].x) / 3.0,
                  (fm.vertices[v[0]].y + fm.vertices[v[1]].y + fm.vertices[v[2]].y) / 3.0};
    const double coef = g.spec.matrix_permeability * mob(t, c);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        a(v[i], v[j]) += coef * area * (inv(1, i) * inv(1, j) + inv(2, i) * inv(2, j));
  }
  for (const auto& e : fm.fracture_edges) {
    const auto& f = g.spec.network.fractures[e.fracture];
    const Point pa = fm.vertices[e.a], pb = fm.vertices[e.b];
    const double h = std::hypot(pb.x - pa.x, pb.y - pa.y);
    const double c = f.aperture * f.permeability * mob(t, {(pa.x + pb.x) / 2, (pa.y + pb.y) / 2}) / h;
    a(e.a, e.a) += c;
    a(e.b, e.b) += c;
    a(e.a, e.b) -= c;
    a(e.b, e.a) -= c;
  }
  return a;
}

inline Eigen::VectorXd oracle_load(const Geometry& g, const SourceField& src, int step) {
  const auto& fm = g.fine;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(fm.vertex_count());
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const auto& v = fm.triangles[tri];
    Point c{0, 0};
    for (int i : v) {
      c.x += fm.vertices[i].x / 3;
      c.y += fm.vertices[i].y / 3;
    }
    for (int i : v) b[i] += src(step, c) * fm.triangle_area(tri) / 3;
  }
  for (const auto& e : fm.fracture_edges) {
    const Point pa = fm.vertices[e.a], pb = fm.vertices[e.b];
    const double w = 0.5 * g.spec.network.fractures[e.fracture].aperture * std::hypot(pb.x - pa.x, pb.y - pa.y);
    const double val = src(step, {(pa.x + pb.x) / 2, (pa.y + pb.y) / 2});
    b[e.a] += w * val;
    b[e.b] += w * val;
  }
  return b;
}

// Row-lumped mass: a third of each triangle area per vertex, half of each fracture edge's d*h per endpoint.
inline Eigen::VectorXd oracle_lumped_mass(const Geometry& g) {
  const auto& fm = g.fine;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(fm.vertex_count());
  for (int tri = 0; tri < fm.triangle_count(); ++tri) {
    const auto& v = fm.triangles[tri];
    const Point a = fm.vertices[v[0]], b = fm.vertices[v[1]], c = fm.vertices[v[2]];
    const double area = 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    for (int i : v) m[i] += area / 3;
  }
  for (const auto& e : fm.fracture_edges) {
    const Point pa = fm.vertices[e.a], pb = fm.vertices[e.b];
    const double w = 0.5 * g.spec.network.fractures[e.fracture].aperture * std::hypot(pb.x - pa.x, pb.y - pa.y);
    m[e.a] += w;
    m[e.b] += w;
  }
  return m;
}

}  // namespace dmml::oracle
