// Plain-text exports of trajectories and coarse operators.

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmml/fields.hpp"
#include "dmml/mesh.hpp"
#include "dmml/nlmc.hpp"

namespace dmml {

/// Rows are time levels (first column is the 1-based level), remaining columns are vector entries.
void write_states_csv(const std::string& path, const std::vector<Eigen::VectorXd>& states);
std::vector<Eigen::VectorXd> read_states_csv(const std::string& path);

/// Writes `<stem>.csv` and the sidecar `<stem>.json` (dt, n_steps, geometry hash, source, mobility).
void write_trajectory(const std::string& stem, const std::vector<Eigen::VectorXd>& states, double dt,
                      const Geometry& geometry, const SourceField& source, const MobilityField& mobility);

/// Coordinate text: first line "rows cols nnz", then one "i j value" line per entry (0-based).
void write_coo(const std::string& path, const Eigen::SparseMatrix<double>& m);
Eigen::SparseMatrix<double> read_coo(const std::string& path);

/// Writes T.coo, A_T.coo, M_T.coo and system.json (size, layers, snapshot time, dof map) into `dir`.
void write_coarse_system(const std::string& dir, const Geometry& geometry, const CoarseSystem& system);

}  // namespace dmml
