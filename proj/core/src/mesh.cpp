#include "dmml/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dmml {

namespace {

constexpr double kGridTol = 1e-9;

// Index of the fine grid line through `v`, or -1 when `v` is not on a grid line.
int grid_line(double v, double origin, double h, int max_index) {
  const double r = (v - origin) / h;
  const double k = std::round(r);
  if (std::abs(r - k) > kGridTol || k < 0 || k > max_index) return -1;
  return static_cast<int>(k);
}

std::string describe(int id, const Fracture& f) {
  std::ostringstream os;
  os << "fracture " << id << " (" << f.x0 << "," << f.y0 << ")-(" << f.x1 << "," << f.y1 << ")";
  return os.str();
}

}  // namespace

double Fracture::length() const { return std::hypot(x1 - x0, y1 - y0); }

FractureNetwork FractureNetwork::with_permeability(double permeability) const {
  FractureNetwork out = *this;
  for (auto& f : out.fractures) f.permeability = permeability;
  return out;
}

void to_json(nlohmann::json& j, const Fracture& f) {
  j = nlohmann::json{{"x0", f.x0}, {"y0", f.y0},           {"x1", f.x1},
                     {"y1", f.y1}, {"aperture", f.aperture}, {"permeability", f.permeability}};
}

void from_json(const nlohmann::json& j, Fracture& f) {
  j.at("x0").get_to(f.x0);
  j.at("y0").get_to(f.y0);
  j.at("x1").get_to(f.x1);
  j.at("y1").get_to(f.y1);
  j.at("aperture").get_to(f.aperture);
  j.at("permeability").get_to(f.permeability);
}

void to_json(nlohmann::json& j, const GeometrySpec& g) {
  j = nlohmann::json{
      {"domain", {{"x0", g.x0}, {"y0", g.y0}, {"x1", g.x1}, {"y1", g.y1}}},
      {"nx", g.nx},
      {"ny", g.ny},
      {"s", g.s},
      {"matrix_permeability", g.matrix_permeability},
      {"fractures", g.network.fractures},
  };
}

void from_json(const nlohmann::json& j, GeometrySpec& g) {
  if (j.contains("domain")) {
    const auto& d = j.at("domain");
    d.at("x0").get_to(g.x0);
    d.at("y0").get_to(g.y0);
    d.at("x1").get_to(g.x1);
    d.at("y1").get_to(g.y1);
  }
  j.at("nx").get_to(g.nx);
  j.at("ny").get_to(g.ny);
  j.at("s").get_to(g.s);
  g.matrix_permeability = j.value("matrix_permeability", 1.0);
  g.network.fractures = j.value("fractures", std::vector<Fracture>{});
}

GeometrySpec read_geometry_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open geometry file " + path);
  return nlohmann::json::parse(in).get<GeometrySpec>();
}

void write_geometry_spec(const GeometrySpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write geometry file " + path);
  out << nlohmann::json(spec).dump(2) << '\n';
}

std::uint64_t geometry_hash(const GeometrySpec& spec) {
  const std::string text = nlohmann::json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Point CoarseGrid::block_center(int b) const {
  return {x0 + (col_of(b) + 0.5) * hx, y0 + (row_of(b) + 0.5) * hy};
}

int CoarseGrid::distance(int a, int b) const {
  return std::max(std::abs(row_of(a) - row_of(b)), std::abs(col_of(a) - col_of(b)));
}

double FineMesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  const Point& p0 = vertices[tri[0]];
  const Point& p1 = vertices[tri[1]];
  const Point& p2 = vertices[tri[2]];
  return 0.5 * std::abs((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
}

Point FineMesh::triangle_centroid(int t) const {
  const auto& tri = triangles[t];
  Point c;
  for (int v : tri) {
    c.x += vertices[v].x;
    c.y += vertices[v].y;
  }
  return {c.x / 3.0, c.y / 3.0};
}

Point FineMesh::edge_midpoint(const FractureEdge& e) const {
  return {0.5 * (vertices[e.a].x + vertices[e.b].x), 0.5 * (vertices[e.a].y + vertices[e.b].y)};
}

std::vector<int> ContinuumIndex::block_dofs(int block) const {
  std::vector<int> out{matrix_dof[block]};
  out.insert(out.end(), fracture_dofs[block].begin(), fracture_dofs[block].end());
  return out;
}

double Geometry::continuum_measure(int dof) const {
  const auto& d = index.dofs[dof];
  if (d.kind == ContinuumKind::matrix) return coarse.block_area();
  double len = 0.0;
  for (std::size_t e = 0; e < fine.fracture_edges.size(); ++e)
    if (index.edge_dof[e] == dof) len += fine.fracture_edges[e].length;
  return spec.network.fractures[d.fracture].aperture * len;
}

void validate_network(const GeometrySpec& spec) {
  if (spec.nx < 1 || spec.ny < 1 || spec.s < 1)
    throw std::invalid_argument("nx, ny and s must be at least 1");
  if (!(spec.x1 > spec.x0) || !(spec.y1 > spec.y0))
    throw std::invalid_argument("domain extents must be increasing");
  if (!(spec.matrix_permeability > 0.0))
    throw std::invalid_argument("matrix permeability must be positive");
  const int cx = spec.nx * spec.s;
  const int cy = spec.ny * spec.s;
  const double hx = (spec.x1 - spec.x0) / cx;
  const double hy = (spec.y1 - spec.y0) / cy;
  for (std::size_t i = 0; i < spec.network.fractures.size(); ++i) {
    const auto& f = spec.network.fractures[i];
    const int id = static_cast<int>(i);
    if (!(f.aperture > 0.0)) throw std::invalid_argument(describe(id, f) + ": aperture must be positive");
    if (!(f.permeability > 0.0))
      throw std::invalid_argument(describe(id, f) + ": permeability must be positive");
    if (f.x0 == f.x1 && f.y0 == f.y1) throw std::invalid_argument(describe(id, f) + ": zero length");
    if (f.x0 != f.x1 && f.y0 != f.y1)
      throw std::invalid_argument(describe(id, f) + ": not axis-aligned");
    const int i0 = grid_line(f.x0, spec.x0, hx, cx);
    const int i1 = grid_line(f.x1, spec.x0, hx, cx);
    const int j0 = grid_line(f.y0, spec.y0, hy, cy);
    const int j1 = grid_line(f.y1, spec.y0, hy, cy);
    if (i0 < 0 || i1 < 0 || j0 < 0 || j1 < 0)
      throw std::invalid_argument(describe(id, f) + ": endpoints not on fine grid lines inside the domain");
  }
}

Geometry build_geometry(const GeometrySpec& spec) {
  validate_network(spec);

  Geometry g;
  g.spec = spec;
  g.hash = geometry_hash(spec);

  auto& cg = g.coarse;
  cg.nx = spec.nx;
  cg.ny = spec.ny;
  cg.x0 = spec.x0;
  cg.y0 = spec.y0;
  cg.hx = (spec.x1 - spec.x0) / spec.nx;
  cg.hy = (spec.y1 - spec.y0) / spec.ny;

  auto& fm = g.fine;
  fm.cells_x = spec.nx * spec.s;
  fm.cells_y = spec.ny * spec.s;
  fm.hx = (spec.x1 - spec.x0) / fm.cells_x;
  fm.hy = (spec.y1 - spec.y0) / fm.cells_y;

  fm.vertices.reserve(static_cast<std::size_t>(fm.cells_x + 1) * (fm.cells_y + 1));
  for (int j = 0; j <= fm.cells_y; ++j)
    for (int i = 0; i <= fm.cells_x; ++i)
      fm.vertices.push_back({spec.x0 + i * fm.hx, spec.y0 + j * fm.hy});

  const std::size_t ntri = 2ULL * fm.cells_x * fm.cells_y;
  fm.triangles.reserve(ntri);
  fm.triangle_block.reserve(ntri);
  for (int j = 0; j < fm.cells_y; ++j) {
    for (int i = 0; i < fm.cells_x; ++i) {
      const int n00 = fm.vertex(i, j), n10 = fm.vertex(i + 1, j);
      const int n01 = fm.vertex(i, j + 1), n11 = fm.vertex(i + 1, j + 1);
      const int blk = cg.block(j / spec.s, i / spec.s);
      fm.triangles.push_back({n00, n10, n11});
      fm.triangles.push_back({n00, n11, n01});
      fm.triangle_block.push_back(blk);
      fm.triangle_block.push_back(blk);
    }
  }
  fm.triangle_permeability.assign(fm.triangles.size(), spec.matrix_permeability);

  // Fracture edges. An edge lying on a coarse grid line belongs to the block below (left).
  for (std::size_t fid = 0; fid < spec.network.fractures.size(); ++fid) {
    const auto& f = spec.network.fractures[fid];
    const int i0 = grid_line(f.x0, spec.x0, fm.hx, fm.cells_x);
    const int i1 = grid_line(f.x1, spec.x0, fm.hx, fm.cells_x);
    const int j0 = grid_line(f.y0, spec.y0, fm.hy, fm.cells_y);
    const int j1 = grid_line(f.y1, spec.y0, fm.hy, fm.cells_y);
    auto owner_index = [&](int line, int cells_per_block, int blocks) {
      int b = line / cells_per_block;
      if (line % cells_per_block == 0 && line > 0) b -= 1;
      return std::min(b, blocks - 1);
    };
    if (j0 == j1) {
      const int row = owner_index(j0, spec.s, spec.ny);
      const int step = i1 > i0 ? 1 : -1;
      for (int i = i0; i != i1; i += step) {
        const int lo = std::min(i, i + step);
        FractureEdge e{fm.vertex(i, j0), fm.vertex(i + step, j0), static_cast<int>(fid),
                       cg.block(row, lo / spec.s), fm.hx};
        fm.fracture_edges.push_back(e);
      }
    } else {
      const int col = owner_index(i0, spec.s, spec.nx);
      const int step = j1 > j0 ? 1 : -1;
      for (int j = j0; j != j1; j += step) {
        const int lo = std::min(j, j + step);
        FractureEdge e{fm.vertex(i0, j), fm.vertex(i0, j + step), static_cast<int>(fid),
                       cg.block(lo / spec.s, col), fm.hy};
        fm.fracture_edges.push_back(e);
      }
    }
  }

  // Continuum numbering: matrix continua 0..N-1 by block, then fracture pieces ordered by segment id
  // and position along the segment. Translating a segment keeps the numbering of its pieces.
  auto& idx = g.index;
  const int nb = cg.block_count();
  idx.matrix_dof.resize(nb);
  idx.fracture_dofs.resize(nb);
  for (int b = 0; b < nb; ++b) {
    idx.matrix_dof[b] = b;
    idx.dofs.push_back({b, ContinuumKind::matrix, -1});
  }
  std::map<std::pair<int, int>, int> piece_dof;  // (segment, block) -> dof
  idx.edge_dof.reserve(fm.fracture_edges.size());
  for (const auto& e : fm.fracture_edges) {
    auto [it, inserted] = piece_dof.emplace(std::make_pair(e.fracture, e.block), idx.size());
    if (inserted) idx.dofs.push_back({e.block, ContinuumKind::fracture, e.fracture});
    idx.edge_dof.push_back(it->second);
  }
  // Within a block, pieces are listed by segment id.
  for (const auto& [key, dof] : piece_dof) idx.fracture_dofs[key.second].push_back(dof);
  return g;
}

bool OversampleRegion::contains_block(int b) const {
  return std::binary_search(blocks.begin(), blocks.end(), b);
}

OversampleRegion oversample(const Geometry& geometry, int block, int layers) {
  const auto& cg = geometry.coarse;
  if (block < 0 || block >= cg.block_count()) throw std::out_of_range("oversample: invalid block id");
  if (layers < 0) throw std::invalid_argument("oversample: negative layer count");

  OversampleRegion r;
  r.center = block;
  r.layers = layers;
  r.row0 = std::max(0, cg.row_of(block) - layers);
  r.row1 = std::min(cg.ny - 1, cg.row_of(block) + layers);
  r.col0 = std::max(0, cg.col_of(block) - layers);
  r.col1 = std::min(cg.nx - 1, cg.col_of(block) + layers);
  for (int row = r.row0; row <= r.row1; ++row)
    for (int col = r.col0; col <= r.col1; ++col) r.blocks.push_back(cg.block(row, col));

  const auto& fm = geometry.fine;
  const int s = geometry.spec.s;
  const int ci0 = r.col0 * s, ci1 = (r.col1 + 1) * s;  // fine cell range [ci0, ci1)
  const int cj0 = r.row0 * s, cj1 = (r.row1 + 1) * s;
  for (int j = cj0; j < cj1; ++j)
    for (int i = ci0; i < ci1; ++i) {
      const int cell = j * fm.cells_x + i;
      r.triangles.push_back(2 * cell);
      r.triangles.push_back(2 * cell + 1);
    }
  for (int j = cj0; j <= cj1; ++j)
    for (int i = ci0; i <= ci1; ++i) {
      const int v = fm.vertex(i, j);
      r.nodes.push_back(v);
      const bool free_x = (i > ci0 || ci0 == 0) && (i < ci1 || ci1 == fm.cells_x);
      const bool free_y = (j > cj0 || cj0 == 0) && (j < cj1 || cj1 == fm.cells_y);
      if (free_x && free_y) r.free_nodes.push_back(v);
    }
  return r;
}

FractureNetwork shift_fracture(const FractureNetwork& network, int segment, int offset_blocks,
                               double block_height, double y_min, double y_max) {
  if (segment < 0 || segment >= static_cast<int>(network.fractures.size()))
    throw std::out_of_range("shift_fracture: invalid segment id");
  FractureNetwork out = network;
  auto& f = out.fractures[segment];
  const double dy = offset_blocks * block_height;
  f.y0 += dy;
  f.y1 += dy;
  const double tol = 1e-12 * (y_max - y_min);
  if (std::min(f.y0, f.y1) < y_min - tol || std::max(f.y0, f.y1) > y_max + tol)
    throw std::invalid_argument(describe(segment, f) + ": shifted outside the domain");
  return out;
}

}  // namespace dmml
