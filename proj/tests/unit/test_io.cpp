#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dmml/io.hpp"

using namespace dmml;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dmml_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Geometry one_fracture() {
  GeometrySpec spec;
  spec.nx = spec.ny = 4;
  spec.s = 4;
  spec.x1 = spec.y1 = 0.4;
  spec.network.fractures = {{0.05, 0.15, 0.35, 0.15, 0.01, 1000.0}};
  return build_geometry(spec);
}

}  // namespace

TEST(Io, CooRoundTripIsExact) {
  Eigen::SparseMatrix<double> m(4, 3);
  m.insert(0, 0) = 1.0 / 3.0;
  m.insert(3, 2) = -1e-300;
  m.insert(2, 1) = 6.02e23;
  m.makeCompressed();
  const auto path = (scratch("coo") / "m.coo").string();
  write_coo(path, m);
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "4 3 3");
  const auto back = read_coo(path);
  EXPECT_EQ(back.rows(), 4);
  EXPECT_EQ(back.cols(), 3);
  EXPECT_EQ(Eigen::MatrixXd(back), Eigen::MatrixXd(m));
}

TEST(Io, StatesCsvRoundTrip) {
  const std::vector<Eigen::VectorXd> states{Eigen::Vector3d(0.1, -2.0, 1e-17), Eigen::Vector3d(std::nextafter(1.0, 2.0), 0, 3)};
  const auto path = (scratch("states") / "u.csv").string();
  write_states_csv(path, states);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header.substr(0, 5), "level");
  EXPECT_EQ(row.substr(0, 2), "1,");
  EXPECT_EQ(read_states_csv(path), states);
}

TEST(Io, TrajectorySidecar) {
  const Geometry g = one_fracture();
  const std::vector<Eigen::VectorXd> states(3, Eigen::VectorXd::Ones(g.index.size()));
  const auto stem = (scratch("traj") / "t").string();
  write_trajectory(stem, states, 0.001, g, SourceField::zero(), MobilityField{});
  EXPECT_EQ(read_states_csv(stem + ".csv"), states);
  std::ifstream in(stem + ".json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("dt").get<double>(), 0.001);
  EXPECT_EQ(j.at("n_steps").get<int>(), 2);
  EXPECT_EQ(j.at("geometry_hash").get<std::string>(), hash_hex(g.hash));
}

TEST(Io, CoarseSystemExport) {
  const Geometry g = one_fracture();
  const CoarseModel model(g, MobilityField{}, 1, 0.001, 1);
  const CoarseSystem& sys = model.system(0);
  const fs::path dir = scratch("system");
  write_coarse_system(dir.string(), g, sys);
  EXPECT_EQ(Eigen::MatrixXd(read_coo((dir / "T.coo").string())), Eigen::MatrixXd(sys.transmissibility));
  EXPECT_EQ(Eigen::MatrixXd(read_coo((dir / "A_T.coo").string())), Eigen::MatrixXd(sys.stiffness));
  EXPECT_EQ(Eigen::VectorXd(Eigen::MatrixXd(read_coo((dir / "M_T.coo").string())).diagonal()), sys.mass);
  std::ifstream in(dir / "system.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("size").get<int>(), g.index.size());
  EXPECT_EQ(j.at("layers").get<int>(), 1);
  ASSERT_EQ(j.at("dofs").size(), static_cast<std::size_t>(g.index.size()));
  for (int d = 0; d < g.index.size(); ++d) EXPECT_EQ(j.at("dofs")[d].at("block").get<int>(), g.index.dofs[d].block);
}

TEST(Io, ReadErrors) {
  EXPECT_ANY_THROW(read_coo("/nonexistent/m.coo"));
  const auto path = (scratch("bad") / "bad.coo").string();
  std::ofstream(path) << "2 2 3\n0 0 1\n";
  EXPECT_ANY_THROW(read_coo(path));
}
