#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "dmml/datagen.hpp"

using namespace dmml;
namespace fs = std::filesystem;

namespace {

Geometry fractured() {
  GeometrySpec spec;
  spec.network.fractures = {{0.05, 0.15, 0.65, 0.15, 0.01, 1000.0}, {0.55, 0.35, 0.55, 0.95, 0.01, 1000.0}};
  return build_geometry(spec);
}

struct Fixture {
  Geometry sim = fractured();
  Geometry obs = [] {
    GeometrySpec spec = fractured().spec;
    spec.network = shift_fracture(spec.network, 0, 1, 0.1);
    return build_geometry(spec);
  }();
};

double source_integral(const Geometry& g, const SourceField& s, int step) {
  double total = 0.0;
  for (int t = 0; t < g.fine.triangle_count(); ++t) total += s(step, g.fine.triangle_centroid(t)) * g.fine.triangle_area(t);
  return total;
}

}  // namespace

TEST(Datagen, Example1Sources) {
  const Geometry g = fractured();
  const auto eligible = fracture_free_blocks(g);
  EXPECT_LT(eligible.size(), 100u);
  EXPECT_GT(eligible.size(), 80u);
  const auto sources = sample_sources_ex1(g.coarse, 300, 10.0, 7, eligible);
  ASSERT_EQ(sources.size(), 300u);
  std::set<int> used;
  for (const auto& s : sources) {
    EXPECT_NE(s.injector_block(), s.producer_block());
    EXPECT_TRUE(std::binary_search(eligible.begin(), eligible.end(), s.injector_block()));
    EXPECT_TRUE(std::binary_search(eligible.begin(), eligible.end(), s.producer_block()));
    EXPECT_FALSE(s.time_dependent());
    used.insert(s.injector_block());
  }
  EXPECT_GT(used.size(), 50u);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(source_integral(g, sources[k], 0), 0.0, 1e-12);

  const auto again = sample_sources_ex1(g.coarse, 300, 10.0, 7, eligible);
  for (std::size_t k = 0; k < sources.size(); ++k) {
    EXPECT_EQ(again[k].injector_block(), sources[k].injector_block());
    EXPECT_EQ(again[k].producer_block(), sources[k].producer_block());
  }
  const auto other = sample_sources_ex1(g.coarse, 300, 10.0, 8, eligible);
  int same = 0;
  for (std::size_t k = 0; k < sources.size(); ++k) same += other[k].injector_block() == sources[k].injector_block();
  EXPECT_LT(same, 30);
}

TEST(Datagen, Example1LoadOnTwoMatrixDofs) {
  const Fixture f;
  const auto eligible = fracture_free_blocks(f.sim);
  for (const auto& s : sample_sources_ex1(f.sim.coarse, 50, 10.0, 3, eligible)) {
    const Eigen::VectorXd b = assemble_coarse_load(f.sim, s, 0);
    int nonzero = 0;
    for (int p = 0; p < b.size(); ++p) {
      if (b[p] == 0.0) continue;
      ++nonzero;
      EXPECT_EQ(f.sim.index.dofs[p].kind, ContinuumKind::matrix);
    }
    EXPECT_EQ(nonzero, 2);
    EXPECT_NEAR(b.sum(), 0.0, 1e-14);
  }
}

TEST(Datagen, Example2Sources) {
  const auto sources = sample_sources_ex2(500, 10, 11);
  ASSERT_EQ(sources.size(), 500u);
  const auto& s = sources[17];
  ASSERT_EQ(s.rates().size(), 10u);
  for (const auto& [a, b] : s.rates()) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 10.0 * M_PI);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 10.0 * M_PI);
  }
  EXPECT_NE(s.rates()[0], s.rates()[1]);
  EXPECT_NE(sources[0].rates()[0], sources[1].rates()[0]);
  // Support and sign.
  for (int step = 0; step < 10; ++step) {
    EXPECT_GE(s(step, {0.05, 0.07}), 0.0);
    EXPECT_LE(s(step, {0.95, 0.93}), 0.0);
    EXPECT_EQ(s(step, {0.5, 0.5}), 0.0);
    EXPECT_EQ(s(step, {0.15, 0.05}), 0.0);
  }
  const auto [a, b] = s.rates()[2];
  EXPECT_NEAR(s(2, {0.03, 0.08}), 10.0 * (std::pow(std::sin(a * 0.03), 2) + std::pow(std::sin(b * 0.08), 2)), 1e-12);
  EXPECT_NEAR(s(2, {0.97, 0.92}), -10.0 * (std::pow(std::sin(a * 0.97), 2) + std::pow(std::sin(b * 0.92), 2)), 1e-12);

  const auto zero = SourceField::oscillating_wells({0, 0, 0.1, 0.1}, {0.9, 0.9, 1, 1}, 10.0, {{0.0, 0.0}});
  EXPECT_EQ(zero(0, {0.05, 0.05}), 0.0);
  EXPECT_EQ(zero(0, {0.95, 0.95}), 0.0);
}

TEST(Datagen, Mobility) {
  const MobilityField none = make_mobility(0.0, 0.0, {0.05, 0.05});
  EXPECT_EQ(none(0.3, {0.05, 0.05}), 1.0);
  EXPECT_EQ(none(0.0, {0.5, 0.5}), 1.0);
  const MobilityField still = make_mobility(0.0, 0.2, {0.05, 0.05});
  EXPECT_FALSE(still.time_dependent());
  EXPECT_EQ(still(0.0, {0.5, 0.5}), still(1.0, {0.5, 0.5}));

  const MobilityField front = make_mobility(30.0, 0.1, {0.05, 0.05});
  for (double t : {0.0, 0.003, 0.01}) EXPECT_EQ(front(t, {0.05, 0.05}), 2.0);
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 20; ++j) {
      const Point p{i / 20.0, j / 20.0};
      double prev = 0.0;
      for (int k = 0; k <= 10; ++k) {
        const double v = front(0.001 * k, p);
        EXPECT_GE(v, 1.0);
        EXPECT_LE(v, 2.0);
        EXPECT_GE(v, prev);
        prev = v;
      }
    }
}

TEST(Datagen, GenerateDatasetAndPairs) {
  const Fixture f;
  const CoarseModel sim(f.sim, {}, 1, 0.001, 10);
  const CoarseModel obs(f.obs, {}, 1, 0.001, 10);
  auto sources = sample_sources_ex1(f.sim.coarse, 6, 10.0, 5, fracture_free_blocks(f.sim));
  sources.push_back(SourceField::zero());
  const auto ds = generate_dataset(sim, sources, Label::simulation);
  const auto dobs = generate_dataset(obs, sources, Label::observation);
  ASSERT_EQ(ds.size(), 7);
  for (int s = 0; s < ds.size(); ++s) {
    ASSERT_EQ(ds.states[s].size(), 11u);
    ASSERT_EQ(ds.loads[s].size(), 10u);
    EXPECT_EQ(ds.states[s][0], Eigen::VectorXd::Zero(ds.dofs));
  }
  for (const auto& u : ds.states[6]) EXPECT_EQ(u, ds.states[6][0]);
  EXPECT_EQ(ds.geometry_hash, f.sim.hash);
  EXPECT_EQ(dobs.geometry_hash, f.obs.hash);

  const PairSet p = make_pairs(ds, dobs, 1, 9);
  EXPECT_EQ(p.size(), 7 * 9);
  EXPECT_EQ(p.input_dim(), 2 * ds.dofs);
  for (int j = 0; j < p.size(); ++j) {
    const int s = p.sample[j], k = p.step[j];
    EXPECT_EQ(p.inputs.col(j).head(ds.dofs), ds.states[s][k - 1]);
    EXPECT_EQ(p.inputs.col(j).tail(ds.dofs), ds.loads[s][k - 1]);
    EXPECT_EQ(p.targets.col(j), dobs.states[s][k]);
    EXPECT_EQ(p.label[j], Label::observation);
  }
  const PairSet one = make_pairs(ds, 1, 1).select_samples({0});
  ASSERT_EQ(one.size(), 1);
  EXPECT_EQ(one.targets.col(0), ds.states[0][1]);
  EXPECT_THROW(make_pairs(ds, 0, 3), std::invalid_argument);
  EXPECT_THROW(make_pairs(ds, 1, 11), std::invalid_argument);

  // Deterministic.
  const auto again = generate_dataset(sim, sources, Label::simulation);
  for (int s = 0; s < ds.size(); ++s) EXPECT_EQ(again.states[s].back(), ds.states[s].back());
}

TEST(Datagen, PairCountsForTheExample1Split) {
  TrajectoryDataset ds;
  ds.dofs = 3;
  ds.n_steps = 10;
  for (int s = 0; s < 300; ++s) {
    ds.sources.push_back(SourceField::zero());
    ds.states.emplace_back(11, Eigen::VectorXd::Constant(3, s));
    ds.loads.emplace_back(10, Eigen::VectorXd::Zero(3));
  }
  const PairSet all = make_pairs(ds, 1, 9);
  std::vector<int> train(290), test(10);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 290);
  EXPECT_EQ(all.select_samples(train).size(), 2610);
  EXPECT_EQ(all.select_samples(test).size(), 90);
}

TEST(Datagen, MixBySample) {
  const Fixture f;
  PairSet sim, obs;
  const int n = f.sim.index.size();
  sim.inputs = Eigen::MatrixXd::Zero(2 * n, 300 * 2);
  sim.targets = Eigen::MatrixXd::Zero(n, 300 * 2);
  for (int s = 0; s < 300; ++s)
    for (int k = 1; k <= 2; ++k) {
      sim.sample.push_back(s);
      sim.step.push_back(k);
    }
  sim.label.assign(600, Label::simulation);
  obs = sim;
  obs.targets.setOnes();
  obs.label.assign(600, Label::observation);

  MixingPolicy p;
  p.fraction = 0.5;
  const PairSet m = mix_datasets(sim, obs, p, f.sim);
  std::set<int> from_obs;
  for (int j = 0; j < m.size(); ++j) {
    if (m.label[j] == Label::observation) {
      from_obs.insert(m.sample[j]);
      EXPECT_EQ(m.targets.col(j), obs.targets.col(j));
    } else {
      EXPECT_EQ(m.targets.col(j), sim.targets.col(j));
    }
  }
  EXPECT_EQ(from_obs.size(), 150u);

  p.fraction = 1.0;
  EXPECT_EQ(mix_datasets(sim, obs, p, f.sim).targets, obs.targets);
  p.fraction = 0.0;
  EXPECT_EQ(mix_datasets(sim, obs, p, f.sim).targets, sim.targets);

  PairSet shifted = obs;
  shifted.step[3] = 5;
  EXPECT_THROW(mix_datasets(sim, shifted, p, f.sim), std::invalid_argument);
}

TEST(Datagen, MixByRegion) {
  const Fixture f;
  const int n = f.sim.index.size();
  PairSet sim;
  sim.inputs = Eigen::MatrixXd::Zero(2 * n, 4);
  sim.targets = Eigen::MatrixXd::Zero(n, 4);
  sim.sample = {0, 0, 1, 1};
  sim.step = {1, 2, 1, 2};
  sim.label.assign(4, Label::simulation);
  PairSet obs = sim;
  obs.targets.setOnes();
  MixingPolicy p;
  p.kind = MixingPolicy::Kind::by_region;
  p.half = "bottom";
  const PairSet m = mix_datasets(sim, obs, p, f.sim);
  for (int q = 0; q < n; ++q) {
    const bool bottom = f.sim.coarse.block_center(f.sim.index.dofs[q].block).y < 0.5;
    for (int j = 0; j < 4; ++j) EXPECT_EQ(m.targets(q, j), bottom ? 1.0 : 0.0);
  }
  for (Label l : m.label) EXPECT_EQ(l, Label::mixed);
}

TEST(Datagen, DatasetRoundTrip) {
  const Fixture f;
  const CoarseModel sim(f.sim, {}, 1, 0.001, 4);
  const auto sources = sample_sources_ex1(f.sim.coarse, 3, 10.0, 5, fracture_free_blocks(f.sim));
  const auto ds = generate_dataset(sim, sources, Label::simulation);
  PairSet p = make_pairs(ds, 1, 3);
  p.label[1] = Label::observation;
  const auto dir = (fs::temp_directory_path() / "dmml_dataset_roundtrip").string();
  fs::remove_all(dir);
  write_dataset(dir, ds, p, {{"note", "x"}});
  for (const char* name : {"metadata.json", "pairs.csv", "pairs.bin", "trajectories.csv"})
    EXPECT_TRUE(fs::exists(dir + "/" + name)) << name;
  const PairSet back = read_pairs(dir);
  EXPECT_EQ(back.inputs, p.inputs);
  EXPECT_EQ(back.targets, p.targets);
  EXPECT_EQ(back.sample, p.sample);
  EXPECT_EQ(back.step, p.step);
  EXPECT_EQ(back.label, p.label);
  fs::remove_all(dir);
}
