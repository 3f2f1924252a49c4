#include "dmml/io.hpp"

#include "text.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmml {

using detail::append_double;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

void write_states_csv(const std::string& path, const std::vector<Eigen::VectorXd>& states) {
  auto out = open_out(path);
  std::string line = "level";
  const Eigen::Index n = states.empty() ? 0 : states.front().size();
  for (Eigen::Index i = 0; i < n; ++i) line += ",v" + std::to_string(i);
  out << line << '\n';
  for (std::size_t k = 0; k < states.size(); ++k) {
    line = std::to_string(k + 1);
    for (Eigen::Index i = 0; i < states[k].size(); ++i) {
      line += ',';
      append_double(line, states[k][i]);
    }
    out << line << '\n';
  }
}

std::vector<Eigen::VectorXd> read_states_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<Eigen::VectorXd> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{}) throw std::runtime_error(path + ": bad number '" + cell + "'");
      values.push_back(v);
    }
    out.push_back(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return out;
}

void write_trajectory(const std::string& stem, const std::vector<Eigen::VectorXd>& states, double dt,
                      const Geometry& geometry, const SourceField& source, const MobilityField& mobility) {
  write_states_csv(stem + ".csv", states);
  nlohmann::json meta{{"dt", dt},
                      {"n_steps", states.empty() ? 0 : static_cast<int>(states.size()) - 1},
                      {"size", states.empty() ? 0 : states.front().size()},
                      {"geometry_hash", hash_hex(geometry.hash)},
                      {"source", source.to_json()},
                      {"mobility", mobility.to_json()}};
  auto out = open_out(stem + ".json");
  out << meta.dump(2) << '\n';
}

void write_coo(const std::string& path, const Eigen::SparseMatrix<double>& m) {
  auto out = open_out(path);
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  std::string line;
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      line = std::to_string(it.row()) + ' ' + std::to_string(it.col()) + ' ';
      append_double(line, it.value());
      out << line << '\n';
    }
  }
}

Eigen::SparseMatrix<double> read_coo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  if (!(in >> rows >> cols >> nnz)) throw std::runtime_error(path + ": bad header");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (Eigen::Index k = 0; k < nnz; ++k) {
    Eigen::Index i = 0, j = 0;
    std::string value;
    if (!(in >> i >> j >> value)) throw std::runtime_error(path + ": truncated");
    double v = 0.0;
    std::from_chars(value.data(), value.data() + value.size(), v);
    trips.emplace_back(i, j, v);
  }
  Eigen::SparseMatrix<double> m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

void write_coarse_system(const std::string& dir, const Geometry& geometry, const CoarseSystem& system) {
  std::filesystem::create_directories(dir);
  write_coo(dir + "/T.coo", system.transmissibility);
  write_coo(dir + "/A_T.coo", system.stiffness);
  Eigen::SparseMatrix<double> mass(system.mass.size(), system.mass.size());
  for (Eigen::Index i = 0; i < system.mass.size(); ++i) mass.insert(i, i) = system.mass[i];
  write_coo(dir + "/M_T.coo", mass);

  nlohmann::json dofs = nlohmann::json::array();
  for (const auto& d : geometry.index.dofs) {
    dofs.push_back({{"block", d.block},
                    {"continuum", d.kind == ContinuumKind::matrix ? "matrix" : "fracture"},
                    {"fracture", d.fracture}});
  }
  nlohmann::json meta{{"size", geometry.index.size()},
                      {"layers", system.layers},
                      {"snapshot_time", system.snapshot_time},
                      {"geometry_hash", hash_hex(geometry.hash)},
                      {"files", {{"T", "T.coo"}, {"A_T", "A_T.coo"}, {"M_T", "M_T.coo"}}},
                      {"dofs", dofs}};
  auto out = open_out(dir + "/system.json");
  out << meta.dump(2) << '\n';
}

}  // namespace dmml
