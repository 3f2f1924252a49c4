#include "dmml/datagen.hpp"

#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dmml {

using detail::append_double;

namespace {

constexpr char kPairMagic[8] = {'D', 'M', 'M', 'L', 'P', 'A', 'I', 'R'};

}  // namespace

Rect block_rect(const CoarseGrid& grid, int block) {
  const double x0 = grid.x0 + grid.col_of(block) * grid.hx;
  const double y0 = grid.y0 + grid.row_of(block) * grid.hy;
  return {x0, y0, x0 + grid.hx, y0 + grid.hy};
}

std::vector<int> fracture_free_blocks(const Geometry& geometry) {
  std::vector<int> out;
  for (int b = 0; b < geometry.coarse.block_count(); ++b) {
    const Rect r = block_rect(geometry.coarse, b);
    const bool touched = std::any_of(geometry.fine.fracture_edges.begin(), geometry.fine.fracture_edges.end(),
                                     [&](const FractureEdge& e) { return r.contains(geometry.fine.edge_midpoint(e)); });
    if (!touched) out.push_back(b);
  }
  return out;
}

std::vector<SourceField> sample_sources_ex1(const CoarseGrid& grid, int count, double rate, std::uint64_t seed,
                                            std::vector<int> eligible) {
  if (count < 1) throw std::invalid_argument("sample_sources_ex1: count must be positive");
  if (eligible.empty()) {
    eligible.resize(grid.block_count());
    std::iota(eligible.begin(), eligible.end(), 0);
  }
  if (eligible.size() < 2) throw std::invalid_argument("sample_sources_ex1: need at least two eligible blocks");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  std::vector<SourceField> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const int inj = eligible[pick(rng)];
    int prod = inj;
    while (prod == inj) prod = eligible[pick(rng)];
    out.push_back(SourceField::block_wells(block_rect(grid, inj), block_rect(grid, prod), rate, inj, prod));
  }
  return out;
}

std::vector<SourceField> sample_sources_ex2(int count, int n_steps, std::uint64_t seed,
                                            const OscillatingWellConfig& config) {
  if (count < 1) throw std::invalid_argument("sample_sources_ex2: count must be positive");
  if (n_steps < 1) throw std::invalid_argument("sample_sources_ex2: n_steps must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> rate(0.0, config.max_rate);
  std::vector<SourceField> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    std::vector<std::pair<double, double>> ab(n_steps);
    for (auto& [a, b] : ab) {
      a = rate(rng);
      b = rate(rng);
    }
    out.push_back(SourceField::oscillating_wells(config.injector, config.producer, config.amplitude, std::move(ab)));
  }
  return out;
}

MobilityField make_mobility(double speed, double initial_radius, Point center) {
  return MobilityField(speed, initial_radius, center);
}

TrajectoryDataset generate_dataset(const CoarseModel& model, const std::vector<SourceField>& sources, Label label) {
  TrajectoryDataset ds;
  ds.label = label;
  ds.geometry_hash = model.geometry().hash;
  ds.dt = model.dt();
  ds.n_steps = model.steps();
  ds.dofs = model.size();
  ds.sources = sources;
  ds.states.reserve(sources.size());
  ds.loads.reserve(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    try {
      std::vector<Eigen::VectorXd> loads;
      std::vector<Eigen::VectorXd> states{Eigen::VectorXd::Zero(model.size())};
      for (int k = 0; k < model.steps(); ++k) {
        loads.push_back(model.load(sources[s], k));
        states.push_back(model.step(states.back(), loads.back(), k));
      }
      ds.states.push_back(std::move(states));
      ds.loads.push_back(std::move(loads));
    } catch (const std::exception& e) {
      throw std::runtime_error("generate_dataset: source " + std::to_string(s) + ": " + e.what());
    }
  }
  return ds;
}

PairSet make_pairs(const TrajectoryDataset& inputs, const TrajectoryDataset& targets, int first, int last) {
  if (inputs.size() != targets.size() || inputs.n_steps != targets.n_steps || inputs.dofs != targets.dofs)
    throw std::invalid_argument("make_pairs: input and target datasets do not match");
  if (first < 1 || last < first || last > inputs.n_steps)
    throw std::invalid_argument("make_pairs: step range outside the trajectory");
  const int n = inputs.dofs;
  const int per_source = last - first + 1;
  PairSet p;
  p.inputs.resize(2 * n, static_cast<Eigen::Index>(inputs.size()) * per_source);
  p.targets.resize(n, p.inputs.cols());
  int col = 0;
  for (int s = 0; s < inputs.size(); ++s) {
    for (int k = first; k <= last; ++k, ++col) {
      p.inputs.col(col) << inputs.states[s][k - 1], inputs.loads[s][k - 1];
      p.targets.col(col) = targets.states[s][k];
      p.sample.push_back(s);
      p.step.push_back(k);
      p.label.push_back(targets.label);
    }
  }
  return p;
}

PairSet make_pairs(const TrajectoryDataset& dataset, int first, int last) {
  return make_pairs(dataset, dataset, first, last);
}

void to_json(nlohmann::json& j, const MixingPolicy& p) {
  j = nlohmann::json{{"kind", p.kind == MixingPolicy::Kind::by_sample ? "by_sample" : "by_region"},
                     {"fraction", p.fraction},
                     {"half", p.half},
                     {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, MixingPolicy& p) {
  const std::string kind = j.value("kind", std::string("by_sample"));
  if (kind != "by_sample" && kind != "by_region") throw std::invalid_argument("unknown mixing policy '" + kind + "'");
  p.kind = kind == "by_sample" ? MixingPolicy::Kind::by_sample : MixingPolicy::Kind::by_region;
  p.fraction = j.value("fraction", 0.5);
  p.half = j.value("half", std::string("bottom"));
  p.seed = j.value("seed", std::uint64_t{1});
}

PairSet mix_datasets(const PairSet& simulation, const PairSet& observation, const MixingPolicy& policy,
                     const Geometry& geometry) {
  if (simulation.size() != observation.size() || simulation.sample != observation.sample ||
      simulation.step != observation.step || simulation.output_dim() != observation.output_dim() ||
      simulation.input_dim() != observation.input_dim())
    throw std::invalid_argument("mix_datasets: pair sets come from different sources or steps");

  PairSet out = simulation;
  if (policy.kind == MixingPolicy::Kind::by_sample) {
    if (!(policy.fraction >= 0.0 && policy.fraction <= 1.0))
      throw std::invalid_argument("mix_datasets: fraction must lie in [0, 1]");
    std::vector<int> ids = simulation.sample;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::mt19937_64 rng(policy.seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(policy.fraction * static_cast<double>(ids.size())));
    std::vector<int> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(chosen.begin(), chosen.end());
    for (int j = 0; j < out.size(); ++j) {
      if (std::binary_search(chosen.begin(), chosen.end(), out.sample[j])) {
        out.targets.col(j) = observation.targets.col(j);
        out.label[j] = Label::observation;
      } else {
        out.label[j] = Label::simulation;
      }
    }
    return out;
  }

  if (geometry.index.size() != out.output_dim())
    throw std::invalid_argument("mix_datasets: geometry does not match the target size");
  const double xm = 0.5 * (geometry.spec.x0 + geometry.spec.x1);
  const double ym = 0.5 * (geometry.spec.y0 + geometry.spec.y1);
  auto observed = [&](int dof) {
    const Point c = geometry.coarse.block_center(geometry.index.dofs[dof].block);
    if (policy.half == "bottom") return c.y < ym;
    if (policy.half == "top") return c.y > ym;
    if (policy.half == "left") return c.x < xm;
    if (policy.half == "right") return c.x > xm;
    throw std::invalid_argument("mix_datasets: unknown half '" + policy.half + "'");
  };
  for (int p = 0; p < out.output_dim(); ++p)
    if (observed(p)) out.targets.row(p) = observation.targets.row(p);
  std::fill(out.label.begin(), out.label.end(), Label::mixed);
  return out;
}

void write_pairs_binary(const std::string& path, const PairSet& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::uint64_t rows = static_cast<std::uint64_t>(pairs.size());
  const std::uint64_t cols = static_cast<std::uint64_t>(pairs.input_dim() + pairs.output_dim() + 2);
  out.write(kPairMagic, sizeof(kPairMagic));
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  std::vector<double> row(cols);
  for (int j = 0; j < pairs.size(); ++j) {
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < pairs.inputs.rows(); ++i) row[c++] = pairs.inputs(i, j);
    for (Eigen::Index i = 0; i < pairs.targets.rows(); ++i) row[c++] = pairs.targets(i, j);
    row[c++] = pairs.sample[j];
    row[c++] = pairs.step[j];
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(double)));
  }
}

PairSet read_pairs_binary(const std::string& path, int input_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in || std::memcmp(magic, kPairMagic, sizeof(magic)) != 0) throw std::runtime_error(path + ": not a pair file");
  if (cols < static_cast<std::uint64_t>(input_dim) + 3) throw std::runtime_error(path + ": too few columns");
  const auto out_dim = static_cast<Eigen::Index>(cols - input_dim - 2);
  PairSet p;
  p.inputs.resize(input_dim, static_cast<Eigen::Index>(rows));
  p.targets.resize(out_dim, static_cast<Eigen::Index>(rows));
  std::vector<double> row(cols);
  for (std::uint64_t j = 0; j < rows; ++j) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(double)));
    if (!in) throw std::runtime_error(path + ": truncated");
    const auto jj = static_cast<Eigen::Index>(j);
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < input_dim; ++i) p.inputs(i, jj) = row[c++];
    for (Eigen::Index i = 0; i < out_dim; ++i) p.targets(i, jj) = row[c++];
    p.sample.push_back(static_cast<int>(row[c++]));
    p.step.push_back(static_cast<int>(row[c++]));
  }
  p.label.assign(rows, Label::simulation);
  return p;
}

void write_pairs_csv(const std::string& path, const PairSet& pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::string line;
  for (int i = 0; i < pairs.input_dim(); ++i) line += "x" + std::to_string(i) + ",";
  for (int i = 0; i < pairs.output_dim(); ++i) line += "y" + std::to_string(i) + ",";
  line += "sample,step\n";
  out << line;
  for (int j = 0; j < pairs.size(); ++j) {
    line.clear();
    for (Eigen::Index i = 0; i < pairs.inputs.rows(); ++i) {
      append_double(line, pairs.inputs(i, j));
      line += ',';
    }
    for (Eigen::Index i = 0; i < pairs.targets.rows(); ++i) {
      append_double(line, pairs.targets(i, j));
      line += ',';
    }
    line += std::to_string(pairs.sample[j]) + "," + std::to_string(pairs.step[j]) + "\n";
    out << line;
  }
}

void write_dataset(const std::string& dir, const TrajectoryDataset& trajectories, const PairSet& pairs,
                   const nlohmann::json& extra_metadata, bool csv) {
  std::filesystem::create_directories(dir);
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : trajectories.sources) sources.push_back(s.to_json());
  nlohmann::json labels = nlohmann::json::array();
  for (Label l : pairs.label) labels.push_back(to_string(l));
  nlohmann::json meta{
      {"label", to_string(trajectories.label)},
      {"geometry_hash", hash_hex(trajectories.geometry_hash)},
      {"dt", trajectories.dt},
      {"n_steps", trajectories.n_steps},
      {"dofs", trajectories.dofs},
      {"input_dim", pairs.input_dim()},
      {"output_dim", pairs.output_dim()},
      {"pair_count", pairs.size()},
      {"columns", "x[0..input_dim) | y[0..output_dim) | sample | step"},
      {"pair_labels", labels},
      {"sources", sources},
  };
  if (extra_metadata.is_object())
    for (const auto& [k, v] : extra_metadata.items()) meta[k] = v;
  {
    std::ofstream out(dir + "/metadata.json");
    out << meta.dump(2) << '\n';
  }
  write_pairs_binary(dir + "/pairs.bin", pairs);
  if (!csv) return;
  write_pairs_csv(dir + "/pairs.csv", pairs);

  std::ofstream traj(dir + "/trajectories.csv");
  std::string line = "sample,step";
  for (int p = 0; p < trajectories.dofs; ++p) line += ",u" + std::to_string(p);
  traj << line << '\n';
  for (int s = 0; s < trajectories.size(); ++s) {
    for (std::size_t k = 0; k < trajectories.states[s].size(); ++k) {
      line = std::to_string(s) + "," + std::to_string(k + 1);
      for (Eigen::Index p = 0; p < trajectories.states[s][k].size(); ++p) {
        line += ',';
        append_double(line, trajectories.states[s][k][p]);
      }
      traj << line << '\n';
    }
  }
}

PairSet read_pairs(const std::string& dir) {
  std::ifstream in(dir + "/metadata.json");
  if (!in) throw std::runtime_error("cannot open " + dir + "/metadata.json");
  const auto meta = nlohmann::json::parse(in);
  PairSet p = read_pairs_binary(dir + "/pairs.bin", meta.at("input_dim").get<int>());
  const auto& labels = meta.at("pair_labels");
  if (labels.size() != static_cast<std::size_t>(p.size())) throw std::runtime_error(dir + ": label count mismatch");
  for (std::size_t j = 0; j < labels.size(); ++j) p.label[j] = label_from_string(labels[j].get<std::string>());
  return p;
}

}  // namespace dmml
