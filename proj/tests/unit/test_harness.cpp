#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dmml/harness.hpp"

using namespace dmml;
namespace fs = std::filesystem;

namespace {

const std::string kConfigDir = DMML_CONFIG_DIR;

ExperimentConfig tiny_example1(const std::string& out) {
  ExperimentConfig c = load_experiment(kConfigDir + "/example1_small.json");
  c.sources.count = 8;
  c.train_count = 6;
  c.test_count = 2;
  for (auto& n : c.networks) n.epochs = 4;
  c.output = out;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dmml_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Harness, RelativeError) {
  const Eigen::Vector2d ref(3.0, 4.0);
  EXPECT_EQ(relative_error(ref, ref), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(Eigen::Vector2d::Zero(), ref), 100.0);
  EXPECT_NEAR(relative_error(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(1.0, 1.0)), 100.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(relative_error(ref, Eigen::Vector2d::Zero()), std::invalid_argument);
  EXPECT_THROW(relative_error(Eigen::Vector3d::Zero(), ref), std::invalid_argument);
}

TEST(Harness, OrderingOnReferenceMeans) {
  EXPECT_TRUE(compare_networks({3.6, 10.6, 19.7}).passed());
  EXPECT_TRUE(compare_networks({2.6, 8.8, 64.3}).passed());
  EXPECT_TRUE(compare_networks({5.0, 5.0, 5.0}).passed());
  const auto v = compare_networks({12.0, 10.0, 30.0});
  EXPECT_FALSE(v.o_within_m);
  EXPECT_TRUE(v.m_within_s);
  EXPECT_FALSE(v.passed());
}

TEST(Harness, DeriveSeed) {
  EXPECT_EQ(derive_seed(7, "split"), derive_seed(7, "split"));
  EXPECT_NE(derive_seed(7, "split"), derive_seed(7, "sources"));
  EXPECT_NE(derive_seed(7, "split"), derive_seed(8, "split"));
  EXPECT_NE(derive_seed(7, "train/o"), derive_seed(7, "train/m"));
}

TEST(Harness, ShippedConfigsParse) {
  for (const char* name : {"example1.json", "example2.json", "example3.json", "example1_small.json",
                           "example2_small.json"}) {
    const ExperimentConfig c = load_experiment(kConfigDir + "/" + name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_TRUE(fs::exists(c.simulation_geometry)) << name;
    EXPECT_EQ(c.networks[1].loss, LossKind::weighted) << name;
  }
  const ExperimentConfig e1 = load_experiment(kConfigDir + "/example1.json");
  EXPECT_EQ(e1.sources.count, 300);
  EXPECT_EQ(e1.train_count + e1.test_count, 300);
  ASSERT_EQ(e1.mask_radii.size(), 2u);
  EXPECT_FALSE(e1.mask_radii[0].has_value());
  EXPECT_EQ(e1.mask_radii[1], 1);
  for (const auto& n : e1.networks) {
    EXPECT_EQ(n.hidden.size(), 6u);
    EXPECT_EQ(n.epochs, 500);
  }
  const ExperimentConfig e2 = load_experiment(kConfigDir + "/example2.json");
  EXPECT_EQ(e2.rollout_pre_steps, 8);
  EXPECT_EQ(e2.basis_update, BasisUpdate::per_step);
  const ExperimentConfig e3 = load_experiment(kConfigDir + "/example3.json");
  EXPECT_EQ(*e3.simulation_fracture_permeability, 10.0);
  EXPECT_EQ(*e3.observation_fracture_permeability, 1000.0);
  EXPECT_EQ(e3.sources.count, 200);
}

TEST(Harness, ConfigJsonRoundTrip) {
  const ExperimentConfig c = load_experiment(kConfigDir + "/example2.json");
  const nlohmann::json j = c;
  const ExperimentConfig back = experiment_from_json(j, "/");
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Harness, ConfigValidation) {
  ExperimentConfig c = load_experiment(kConfigDir + "/example1_small.json");
  c.train_count += 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = load_experiment(kConfigDir + "/example1_small.json");
  c.simulation_geometry = "/nonexistent/geometry.json";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = load_experiment(kConfigDir + "/example1_small.json");
  c.last_step = c.n_steps + 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  nlohmann::json j = nlohmann::json::parse(slurp(kConfigDir + "/example1_small.json"));
  j["mask_radius"] = "wide";
  EXPECT_ANY_THROW(experiment_from_json(j, kConfigDir));
}

TEST(Harness, DataLayout) {
  const ExperimentConfig c = tiny_example1(scratch_dir("layout").string());
  const ExperimentData d = generate_experiment_data(c);
  EXPECT_EQ(d.train_ids.size(), 6u);
  EXPECT_EQ(d.test_ids.size(), 2u);
  std::vector<int> all = d.train_ids;
  all.insert(all.end(), d.test_ids.begin(), d.test_ids.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expected(8);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  const int n = d.simulation_geometry.index.size();
  for (Role r : kRoles) {
    const PairSet p = d.training(r);
    EXPECT_EQ(p.size(), 6 * 9);
    EXPECT_EQ(p.input_dim(), 2 * n);
    // Every network sees the same simulation inputs.
    EXPECT_EQ(p.inputs, d.training(Role::s).inputs);
  }
  const PairSet test = d.testing();
  EXPECT_EQ(test.size(), 2 * 9);
  for (int j = 0; j < test.size(); ++j) {
    const int s = test.sample[j], k = test.step[j];
    EXPECT_EQ(Eigen::VectorXd(test.inputs.col(j).head(n)), d.simulation.states[s][k - 1]);
    EXPECT_EQ(Eigen::VectorXd(test.targets.col(j)), d.observation.states[s][k]);
  }
}

TEST(Harness, SmallRunIsDeterministicAndConsistent) {
  const fs::path a = scratch_dir("run_a"), b = scratch_dir("run_b");
  const ErrorReport ra = run_example(tiny_example1(a.string()));
  run_example(tiny_example1(b.string()));
  for (const char* f : {"report.json", "errors_per_sample.csv", "loss_history_o.csv", "loss_history_m.csv",
                        "loss_history_s.csv", "models/N_o_full.model", "models/N_m_r1.model",
                        "datasets/mixed/pairs.bin"})
    EXPECT_EQ(slurp((a / f).string()), slurp((b / f).string())) << f;

  const auto report = nlohmann::json::parse(slurp((a / "report.json").string()));
  EXPECT_TRUE(report.at("complete").get<bool>());
  ASSERT_EQ(ra.variants.size(), 2u);

  // Errors recomputed from the saved models and datasets.
  const StoredData stored = read_experiment_data(a.string());
  const PairSet test = stored.observation_pairs.select_samples(stored.test_ids);
  for (const auto& v : ra.variants) {
    ASSERT_EQ(static_cast<int>(v.sample.size()), test.size());
    for (Role r : kRoles) {
      const int i = static_cast<int>(r);
      const SurrogateModel m = load_model((a / "models" / ("N_" + role_name(r) + "_" + v.name + ".model")).string());
      double sum = 0.0;
      for (int j = 0; j < test.size(); ++j) {
        const double e = relative_error(m.predict(Eigen::VectorXd(test.inputs.col(j))), test.targets.col(j));
        EXPECT_NEAR(e, v.one_step[i][j], 1e-12 * std::max(1.0, e));
        sum += v.one_step[i][j];
      }
      EXPECT_NEAR(v.mean[i], sum / test.size(), 1e-12);
      EXPECT_EQ(v.history[i].size(), 5u);
    }
    EXPECT_EQ(v.ordering.passed(), compare_networks(v.mean, 1.1).passed());
  }

  std::ifstream csv(a / "errors_per_sample.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "variant,sample,step,err_o,err_m,err_s");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 2 * 2 * 9);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Harness, SeedChangesResults) {
  const fs::path a = scratch_dir("seed_a"), b = scratch_dir("seed_b");
  ExperimentConfig ca = tiny_example1(a.string());
  ca.mask_radii = {std::nullopt};
  ExperimentConfig cb = ca;
  cb.output = b.string();
  cb.seed = ca.seed + 1;
  run_example(ca);
  run_example(cb);
  EXPECT_NE(slurp((a / "errors_per_sample.csv").string()), slurp((b / "errors_per_sample.csv").string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Harness, RolloutOfLengthOneMatchesOneStep) {
  ExperimentConfig c = load_experiment(kConfigDir + "/example2_small.json");
  c.sources.count = 3;
  c.train_count = 2;
  c.test_count = 1;
  c.n_steps = 3;
  c.first_step = 1;
  c.last_step = 2;
  c.rollout_pre_steps = 0;
  for (auto& n : c.networks) n.epochs = 2;
  const ExperimentData d = generate_experiment_data(c);
  const auto nets = train_networks(c, d.simulation_geometry, {d.training(Role::o), d.training(Role::m), d.training(Role::s)},
                                   std::nullopt);
  const PairSet test = d.testing();
  const int n = d.simulation_geometry.index.size();
  for (int j = 0; j < test.size(); ++j) {
    const Eigen::VectorXd x = test.inputs.col(j);
    for (const auto& r : nets.results)
      EXPECT_EQ(rollout({&r.model}, x.head(n), {x.tail(n)}), r.model.predict(x));
  }

  c.rollout_pre_steps = 1;
  const VariantReport rep = evaluate_networks(
      c, {&nets.results[0].model, &nets.results[1].model, &nets.results[2].model}, test, "full", std::nullopt);
  ASSERT_EQ(rep.rollout_sample.size(), 1u);
  const int s = rep.rollout_sample[0];
  const Eigen::VectorXd u1 = d.simulation.states[s][0];
  const auto load = [&](int k) { return Eigen::VectorXd(d.testing().inputs.col(k).tail(n)); };
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd pred =
        rollout({&nets.results[2].model, &nets.results[i].model}, u1, {load(0), load(1)});
    EXPECT_NEAR(rep.rollout[i][0], relative_error(pred, d.observation.states[s][2]), 1e-12);
  }
}

TEST(Harness, FailureLeavesIncompleteReport) {
  const fs::path out = scratch_dir("fail");
  ExperimentConfig c = tiny_example1(out.string());
  for (auto& n : c.networks) n.hidden = {32};
  try {
    run_example(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "train");
  }
  const auto report = nlohmann::json::parse(slurp((out / "report.json").string()));
  EXPECT_FALSE(report.at("complete").get<bool>());
  EXPECT_EQ(report.at("failed_stage"), "train");
  fs::remove_all(out);
}
