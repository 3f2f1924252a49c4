// Coarse grid, fracture-conforming fine triangulation and continuum indexing
// for 2-D fractured media.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dmml {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Straight fracture segment with aperture and (dimensionless) conductivity.
struct Fracture {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  double aperture = 0.0;
  double permeability = 0.0;

  bool horizontal() const { return y0 == y1; }
  double length() const;
  bool operator==(const Fracture&) const = default;
};

struct FractureNetwork {
  std::vector<Fracture> fractures;

  /// Sets the permeability of every fracture.
  FractureNetwork with_permeability(double permeability) const;
  bool operator==(const FractureNetwork&) const = default;
};

/// Everything needed to build a geometry; this is what the geometry JSON file holds.
struct GeometrySpec {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  int nx = 10;
  int ny = 10;
  int s = 10;  // fine cells per coarse block edge
  double matrix_permeability = 1.0;
  FractureNetwork network;

  bool operator==(const GeometrySpec&) const = default;
};

void to_json(nlohmann::json& j, const Fracture& f);
void from_json(const nlohmann::json& j, Fracture& f);
void to_json(nlohmann::json& j, const GeometrySpec& g);
void from_json(const nlohmann::json& j, GeometrySpec& g);

GeometrySpec read_geometry_spec(const std::string& path);
void write_geometry_spec(const GeometrySpec& spec, const std::string& path);

/// 64-bit FNV-1a hash of the canonical JSON serialization of a spec.
std::uint64_t geometry_hash(const GeometrySpec& spec);
std::string hash_hex(std::uint64_t h);

struct CoarseGrid {
  int nx = 0;
  int ny = 0;
  double x0 = 0.0, y0 = 0.0;
  double hx = 0.0, hy = 0.0;

  int block_count() const { return nx * ny; }
  int block(int row, int col) const { return row * nx + col; }
  int row_of(int block) const { return block / nx; }
  int col_of(int block) const { return block % nx; }
  double block_area() const { return hx * hy; }
  Point block_center(int block) const;
  /// Chebyshev distance between two blocks in (row, col) index space.
  int distance(int a, int b) const;
};

struct FractureEdge {
  int a = 0;         // fine vertex ids, a precedes b along the segment
  int b = 0;
  int fracture = 0;  // segment id in the network
  int block = 0;     // owning coarse block
  double length = 0.0;
};

/// Structured fine grid, each quad split along its (i,j)-(i+1,j+1) diagonal.
struct FineMesh {
  int cells_x = 0;
  int cells_y = 0;
  double hx = 0.0, hy = 0.0;
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> triangle_block;
  std::vector<double> triangle_permeability;
  std::vector<FractureEdge> fracture_edges;

  int vertex(int i, int j) const { return j * (cells_x + 1) + i; }
  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
  double triangle_area(int t) const;
  Point triangle_centroid(int t) const;
  Point edge_midpoint(const FractureEdge& e) const;
};

enum class ContinuumKind { matrix, fracture };

struct ContinuumIndex {
  struct Dof {
    int block = 0;
    ContinuumKind kind = ContinuumKind::matrix;
    int fracture = -1;  // segment id for fracture continua
  };

  std::vector<Dof> dofs;
  std::vector<int> matrix_dof;                 // per block
  std::vector<std::vector<int>> fracture_dofs;  // per block, ordered by segment id
  std::vector<int> edge_dof;                   // per fine fracture edge

  int size() const { return static_cast<int>(dofs.size()); }
  /// All continua (matrix first) owned by a block.
  std::vector<int> block_dofs(int block) const;
};

struct Geometry {
  GeometrySpec spec;
  CoarseGrid coarse;
  FineMesh fine;
  ContinuumIndex index;
  std::uint64_t hash = 0;

  /// Measure of a continuum: block area for matrix, aperture times length for fractures.
  double continuum_measure(int dof) const;
};

/// Builds the meshes and continuum numbering.
/// Throws std::invalid_argument for fractures that are not axis-aligned or not on fine grid lines.
Geometry build_geometry(const GeometrySpec& spec);

void validate_network(const GeometrySpec& spec);

struct OversampleRegion {
  int center = 0;
  int layers = 0;
  int row0 = 0, row1 = 0, col0 = 0, col1 = 0;  // inclusive block range
  std::vector<int> blocks;
  std::vector<int> triangles;   // fine triangles inside the region
  std::vector<int> nodes;       // fine vertices in the closed region
  std::vector<int> free_nodes;  // subset whose adjacent triangles all lie in the region

  bool contains_block(int b) const;
};

OversampleRegion oversample(const Geometry& geometry, int block, int layers);

/// Translates one segment vertically by `offset_blocks` coarse block heights.
FractureNetwork shift_fracture(const FractureNetwork& network, int segment, int offset_blocks,
                               double block_height, double y_min = 0.0, double y_max = 1.0);

}  // namespace dmml
