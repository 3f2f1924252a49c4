// End-to-end experiments: data generation, the three surrogate networks and their error reports.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmml/datagen.hpp"
#include "dmml/fields.hpp"
#include "dmml/mesh.hpp"
#include "dmml/nlmc.hpp"
#include "dmml/pairs.hpp"
#include "dmml/surrogate.hpp"

namespace dmml {

/// Network roles: trained on observation targets, mixed targets and simulation targets.
enum class Role { o = 0, m = 1, s = 2 };
inline constexpr std::array<Role, 3> kRoles{Role::o, Role::m, Role::s};
std::string role_name(Role r);

struct SourceConfig {
  std::string kind = "block_wells";  // block_wells | oscillating_wells
  int count = 300;
  double rate = 10.0;                // block_wells magnitude
  bool fracture_free = true;         // block_wells: keep wells off fractured blocks of both geometries
  OscillatingWellConfig wells;       // oscillating_wells
};

/// Experiment description. Relative paths in the file are resolved against the file's directory.
struct ExperimentConfig {
  int example = 1;
  std::string simulation_geometry;
  std::string observation_geometry;
  std::optional<double> simulation_fracture_permeability;
  std::optional<double> observation_fracture_permeability;
  int layers = 2;
  double dt = 0.001;
  int n_steps = 10;
  BasisUpdate basis_update = BasisUpdate::frozen;
  MobilityField mobility;
  SourceConfig sources;
  int train_count = 290;
  int test_count = 10;
  int first_step = 1;
  int last_step = 9;
  MixingPolicy mixing;
  std::array<TrainConfig, 3> networks;
  std::vector<std::optional<int>> mask_radii{std::nullopt};  // nullopt is the full network
  int rollout_pre_steps = 0;                                  // 0 disables the rollout test
  double slack = 1.1;
  bool dataset_csv = true;
  std::uint64_t seed = 1;
  std::string output = "out";

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_experiment(const std::string& path);

/// Deterministic sub-seed for a named stage.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

/// 100 * |pred - ref| / |ref|. Throws std::invalid_argument on size mismatch or a zero reference.
double relative_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& ref);

struct OrderingVerdict {
  bool o_within_m = false;  // mean_o <= slack * mean_m
  bool m_within_s = false;  // mean_m <= slack * mean_s
  bool passed() const { return o_within_m && m_within_s; }
};

OrderingVerdict compare_networks(const std::array<double, 3>& means, double slack = 1.1);

struct VariantReport {
  std::string name;  // "full" or "r<radius>"
  std::optional<int> mask_radius;
  std::vector<int> sample;
  std::vector<int> step;
  std::array<std::vector<double>, 3> one_step;  // percent, per test pair
  std::array<double, 3> mean{};
  std::vector<int> rollout_sample;
  std::array<std::vector<double>, 3> rollout;   // percent at the final time, per test source
  std::array<double, 3> rollout_mean{};
  std::array<std::vector<double>, 3> history;   // per-epoch training loss
  OrderingVerdict ordering;
};

struct ErrorReport {
  int example = 0;
  std::uint64_t seed = 0;
  double slack = 1.1;
  std::vector<VariantReport> variants;

  nlohmann::json to_json() const;
};

struct ExperimentData {
  Geometry simulation_geometry;
  Geometry observation_geometry;
  TrajectoryDataset simulation;
  TrajectoryDataset observation;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  PairSet simulation_pairs;   // x = [u_s^n | b^n], y = u_s^{n+1}
  PairSet observation_pairs;  // x = [u_s^n | b^n], y = u_o^{n+1}
  PairSet mixed_pairs;

  PairSet training(Role role) const;
  PairSet testing() const;  // observation targets on the test sources
};

std::pair<Geometry, Geometry> build_experiment_geometries(const ExperimentConfig& config);
ExperimentData generate_experiment_data(const ExperimentConfig& config);

/// Writes datasets/{simulation,observation,mixed} and datasets/split.json below `out`.
void write_experiment_data(const std::string& out, const ExperimentData& data, const ExperimentConfig& config);

struct StoredData {
  PairSet simulation_pairs;
  PairSet observation_pairs;
  PairSet mixed_pairs;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};
StoredData read_experiment_data(const std::string& out);

struct TrainedNetworks {
  std::optional<int> mask_radius;
  std::array<TrainResult, 3> results;
};

std::string variant_name(const std::optional<int>& radius);

/// Trains N_o, N_m and N_s for one mask variant.
TrainedNetworks train_networks(const ExperimentConfig& config, const Geometry& simulation_geometry,
                               const std::array<PairSet, 3>& training, const std::optional<int>& radius);

/// One-step errors against observation targets, plus the rollout errors when enabled.
VariantReport evaluate_networks(const ExperimentConfig& config, const std::array<const SurrogateModel*, 3>& nets,
                                const PairSet& test, const std::string& name, const std::optional<int>& radius);

/// Writes report.json and errors_per_sample.csv (and rollout_errors_per_sample.csv when present).
void write_report(const std::string& out, const ErrorReport& report, bool complete = true);
void write_loss_histories(const std::string& out, const ErrorReport& report);

/// Full pipeline; artifacts go to config.output. Errors are rethrown as StageError.
ErrorReport run_example(const ExperimentConfig& config);

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace dmml
