// Source sampling, coarse trajectory generation and training-pair packaging.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmml/fields.hpp"
#include "dmml/mesh.hpp"
#include "dmml/nlmc.hpp"
#include "dmml/pairs.hpp"

namespace dmml {

/// Blocks that no fracture edge touches (closed block rectangles).
std::vector<int> fracture_free_blocks(const Geometry& geometry);

/// Closed rectangle of a coarse block.
Rect block_rect(const CoarseGrid& grid, int block);

/// Two wells on distinct blocks drawn uniformly from `eligible` (all blocks when empty):
/// +rate on the injector block, -rate on the producer block, constant in time.
std::vector<SourceField> sample_sources_ex1(const CoarseGrid& grid, int count, double rate, std::uint64_t seed,
                                            std::vector<int> eligible = {});

struct OscillatingWellConfig {
  Rect injector{0.0, 0.0, 0.1, 0.1};
  Rect producer{0.9, 0.9, 1.0, 1.0};
  double amplitude = 10.0;
  double max_rate = 10.0 * 3.14159265358979323846;
};

/// Fixed wells with amplitude * [(sin a x)^2 + (sin b y)^2], (a, b) ~ U[0, max_rate]^2 redrawn per step.
std::vector<SourceField> sample_sources_ex2(int count, int n_steps, std::uint64_t seed,
                                            const OscillatingWellConfig& config = {});

MobilityField make_mobility(double speed, double initial_radius, Point center);

struct TrajectoryDataset {
  Label label = Label::simulation;
  std::uint64_t geometry_hash = 0;
  double dt = 0.0;
  int n_steps = 0;
  int dofs = 0;
  std::vector<SourceField> sources;
  std::vector<std::vector<Eigen::VectorXd>> states;  // per source: u^1 .. u^{n_steps+1}
  std::vector<std::vector<Eigen::VectorXd>> loads;   // per source: b_T for steps 1 .. n_steps

  int size() const { return static_cast<int>(sources.size()); }
};

/// Runs the coarse model for every source from a zero initial state.
/// Solver failures are rethrown with the failing source id.
TrajectoryDataset generate_dataset(const CoarseModel& model, const std::vector<SourceField>& sources, Label label);

/// One pair per (source, step) for input steps first..last (1-based): x = [u_in^k | b^k], y = u_target^{k+1}.
/// Inputs come from `inputs` and targets from `targets`, which must share sources and sizes.
PairSet make_pairs(const TrajectoryDataset& inputs, const TrajectoryDataset& targets, int first, int last);
PairSet make_pairs(const TrajectoryDataset& dataset, int first, int last);

struct MixingPolicy {
  enum class Kind { by_sample, by_region };
  Kind kind = Kind::by_sample;
  double fraction = 0.5;               // by_sample: share of sources with observation targets
  std::string half = "bottom";         // by_region: bottom | top | left | right take observation data
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const MixingPolicy& p);
void from_json(const nlohmann::json& j, MixingPolicy& p);

/// Combines targets of two pair sets cut from the same sources and steps.
/// by_region classifies continua by the home block center in `geometry`.
PairSet mix_datasets(const PairSet& simulation, const PairSet& observation, const MixingPolicy& policy,
                     const Geometry& geometry);

/// Dataset directory: metadata.json, pairs.csv, pairs.bin and trajectories.csv.
/// pairs.* columns: [x (d_in) | y (d_out) | sample id | step]; pairs.bin starts with the 8-byte magic
/// "DMMLPAIR", then uint64 rows, uint64 cols, then row-major little-endian float64 values.
void write_dataset(const std::string& dir, const TrajectoryDataset& trajectories, const PairSet& pairs,
                   const nlohmann::json& extra_metadata = {}, bool csv = true);
PairSet read_pairs(const std::string& dir);

void write_pairs_binary(const std::string& path, const PairSet& pairs);
PairSet read_pairs_binary(const std::string& path, int input_dim);
void write_pairs_csv(const std::string& path, const PairSet& pairs);

}  // namespace dmml
