#include "dmml/harness.hpp"

#include "text.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "dmml/io.hpp"

namespace dmml {

using detail::append_double;
namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

Rect rect_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw std::invalid_argument("rectangle must be [x0, y0, x1, y1]");
  return {v[0], v[1], v[2], v[3]};
}

nlohmann::json rect_to_json(const Rect& r) { return {r.x0, r.y0, r.x1, r.y1}; }

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

nlohmann::json role_triple(const std::array<double, 3>& v) {
  return {{"o", v[0]}, {"m", v[1]}, {"s", v[2]}};
}

template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

std::string role_name(Role r) {
  switch (r) {
    case Role::o: return "o";
    case Role::m: return "m";
    case Role::s: return "s";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(master) ^ h);
}

double relative_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& ref) {
  if (pred.size() != ref.size()) throw std::invalid_argument("relative_error: length mismatch");
  const double nr = ref.norm();
  if (!(nr > 0.0)) throw std::invalid_argument("relative_error: reference has zero norm");
  return 100.0 * (pred - ref).norm() / nr;
}

OrderingVerdict compare_networks(const std::array<double, 3>& means, double slack) {
  OrderingVerdict v;
  v.o_within_m = means[0] <= slack * means[1];
  v.m_within_s = means[1] <= slack * means[2];
  return v;
}

std::string variant_name(const std::optional<int>& radius) {
  return radius ? "r" + std::to_string(*radius) : "full";
}

// ---------------------------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (example < 1 || example > 3) throw std::invalid_argument("config: example must be 1, 2 or 3");
  for (const auto* p : {&simulation_geometry, &observation_geometry})
    if (p->empty() || !fs::exists(*p)) throw std::invalid_argument("config: geometry file '" + *p + "' not found");
  if (layers < 0) throw std::invalid_argument("config: layers must be nonnegative");
  if (!(dt > 0.0)) throw std::invalid_argument("config: dt must be positive");
  if (n_steps < 1) throw std::invalid_argument("config: n_steps must be positive");
  if (sources.kind != "block_wells" && sources.kind != "oscillating_wells")
    throw std::invalid_argument("config: unknown source kind '" + sources.kind + "'");
  if (train_count < 1 || test_count < 1) throw std::invalid_argument("config: split sizes must be positive");
  if (train_count + test_count != sources.count)
    throw std::invalid_argument("config: split sizes " + std::to_string(train_count) + " + " +
                                std::to_string(test_count) + " do not sum to the source count " +
                                std::to_string(sources.count));
  if (first_step < 1 || last_step < first_step || last_step > n_steps)
    throw std::invalid_argument("config: pair steps outside 1..n_steps");
  if (rollout_pre_steps < 0 || first_step + rollout_pre_steps > last_step)
    throw std::invalid_argument("config: rollout does not fit in the pair step range");
  if (mask_radii.empty()) throw std::invalid_argument("config: at least one mask variant is required");
  for (const auto& r : mask_radii)
    if (r && *r < 0) throw std::invalid_argument("config: mask radius must be nonnegative");
  if (!(slack >= 1.0)) throw std::invalid_argument("config: slack must be at least 1");
  for (const auto& n : networks) n.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json src{{"kind", c.sources.kind}, {"count", c.sources.count}};
  if (c.sources.kind == "block_wells") {
    src["rate"] = c.sources.rate;
    src["fracture_free"] = c.sources.fracture_free;
  } else {
    src["injector"] = rect_to_json(c.sources.wells.injector);
    src["producer"] = rect_to_json(c.sources.wells.producer);
    src["amplitude"] = c.sources.wells.amplitude;
    src["max_rate"] = c.sources.wells.max_rate;
  }
  nlohmann::json geom{{"simulation", c.simulation_geometry}, {"observation", c.observation_geometry}};
  if (c.simulation_fracture_permeability) geom["simulation_fracture_permeability"] = *c.simulation_fracture_permeability;
  if (c.observation_fracture_permeability)
    geom["observation_fracture_permeability"] = *c.observation_fracture_permeability;
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& r : c.mask_radii) masks.push_back(r ? nlohmann::json(*r) : nlohmann::json("full"));
  j = nlohmann::json{{"example", c.example},
                     {"seed", c.seed},
                     {"output", c.output},
                     {"geometry", geom},
                     {"layers", c.layers},
                     {"dt", c.dt},
                     {"n_steps", c.n_steps},
                     {"basis_update", c.basis_update == BasisUpdate::frozen ? "frozen" : "per_step"},
                     {"mobility", c.mobility.to_json()},
                     {"sources", src},
                     {"split", {{"train", c.train_count}, {"test", c.test_count}}},
                     {"pair_steps", {c.first_step, c.last_step}},
                     {"mixing", c.mixing},
                     {"networks", {{"o", c.networks[0]}, {"m", c.networks[1]}, {"s", c.networks[2]}}},
                     {"mask_radius", masks},
                     {"rollout", {{"pre_steps", c.rollout_pre_steps}}},
                     {"slack", c.slack},
                     {"dataset_csv", c.dataset_csv}};
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& base_dir) {
  ExperimentConfig c;
  c.example = j.value("example", c.example);
  c.seed = j.value("seed", c.seed);
  c.output = j.value("output", c.output);
  const auto& g = j.at("geometry");
  c.simulation_geometry = resolve(base_dir, g.at("simulation").get<std::string>());
  c.observation_geometry = resolve(base_dir, g.value("observation", g.at("simulation").get<std::string>()));
  if (g.contains("simulation_fracture_permeability"))
    c.simulation_fracture_permeability = g["simulation_fracture_permeability"].get<double>();
  if (g.contains("observation_fracture_permeability"))
    c.observation_fracture_permeability = g["observation_fracture_permeability"].get<double>();
  c.layers = j.value("layers", c.layers);
  c.dt = j.value("dt", c.dt);
  c.n_steps = j.value("n_steps", c.n_steps);
  const std::string update = j.value("basis_update", std::string("frozen"));
  if (update != "frozen" && update != "per_step") throw std::invalid_argument("unknown basis_update '" + update + "'");
  c.basis_update = update == "frozen" ? BasisUpdate::frozen : BasisUpdate::per_step;
  if (j.contains("mobility")) c.mobility = MobilityField::from_json(j["mobility"]);

  if (j.contains("sources")) {
    const auto& s = j["sources"];
    c.sources.kind = s.value("kind", c.sources.kind);
    c.sources.count = s.value("count", c.sources.count);
    c.sources.rate = s.value("rate", c.sources.rate);
    c.sources.fracture_free = s.value("fracture_free", c.sources.fracture_free);
    if (s.contains("injector")) c.sources.wells.injector = rect_from_json(s["injector"]);
    if (s.contains("producer")) c.sources.wells.producer = rect_from_json(s["producer"]);
    c.sources.wells.amplitude = s.value("amplitude", c.sources.wells.amplitude);
    c.sources.wells.max_rate = s.value("max_rate", c.sources.wells.max_rate);
  }
  if (j.contains("split")) {
    c.train_count = j["split"].value("train", c.train_count);
    c.test_count = j["split"].value("test", c.test_count);
  }
  if (j.contains("pair_steps")) {
    const auto v = j["pair_steps"].get<std::vector<int>>();
    if (v.size() != 2) throw std::invalid_argument("pair_steps must be [first, last]");
    c.first_step = v[0];
    c.last_step = v[1];
  }
  if (j.contains("mixing")) c.mixing = j["mixing"].get<MixingPolicy>();

  // networks.default applies to all three; networks.{o,m,s} override single fields.
  nlohmann::json base = nlohmann::json::object();
  if (j.contains("networks") && j["networks"].contains("default")) base = j["networks"]["default"];
  for (Role r : kRoles) {
    nlohmann::json merged = base;
    if (r == Role::m && !merged.contains("loss")) merged["loss"] = "weighted";
    if (j.contains("networks") && j["networks"].contains(role_name(r))) merged.update(j["networks"][role_name(r)]);
    c.networks[static_cast<int>(r)] = merged.get<TrainConfig>();
  }

  if (j.contains("mask_radius")) {
    c.mask_radii.clear();
    const auto& m = j["mask_radius"];
    const auto one = [](const nlohmann::json& v) -> std::optional<int> {
      if (v.is_null() || (v.is_string() && v.get<std::string>() == "full")) return std::nullopt;
      if (v.is_number_integer()) return v.get<int>();
      throw std::invalid_argument("mask_radius entries must be \"full\" or an integer");
    };
    if (m.is_array()) {
      for (const auto& v : m) c.mask_radii.push_back(one(v));
    } else {
      c.mask_radii.push_back(one(m));
    }
  }
  if (j.contains("rollout") && !j["rollout"].is_null()) c.rollout_pre_steps = j["rollout"].value("pre_steps", 0);
  c.slack = j.value("slack", c.slack);
  c.dataset_csv = j.value("dataset_csv", c.dataset_csv);
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  const auto j = read_json(path);
  return experiment_from_json(j, fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------------------------
// Data

PairSet ExperimentData::training(Role role) const {
  switch (role) {
    case Role::o: return observation_pairs.select_samples(train_ids);
    case Role::m: return mixed_pairs.select_samples(train_ids);
    case Role::s: return simulation_pairs.select_samples(train_ids);
  }
  throw std::logic_error("unknown role");
}

PairSet ExperimentData::testing() const { return observation_pairs.select_samples(test_ids); }

std::pair<Geometry, Geometry> build_experiment_geometries(const ExperimentConfig& config) {
  GeometrySpec sim = read_geometry_spec(config.simulation_geometry);
  GeometrySpec obs = read_geometry_spec(config.observation_geometry);
  if (config.simulation_fracture_permeability)
    sim.network = sim.network.with_permeability(*config.simulation_fracture_permeability);
  if (config.observation_fracture_permeability)
    obs.network = obs.network.with_permeability(*config.observation_fracture_permeability);
  Geometry gs = build_geometry(sim);
  Geometry go = build_geometry(obs);
  if (gs.index.size() != go.index.size())
    throw std::invalid_argument("simulation and observation geometries have different continuum counts (" +
                                std::to_string(gs.index.size()) + " vs " + std::to_string(go.index.size()) + ")");
  for (int p = 0; p < gs.index.size(); ++p) {
    const auto& a = gs.index.dofs[p];
    const auto& b = go.index.dofs[p];
    if (a.kind != b.kind || a.fracture != b.fracture)
      throw std::invalid_argument("simulation and observation geometries number continuum " + std::to_string(p) +
                                  " differently");
  }
  return {std::move(gs), std::move(go)};
}

namespace {

std::vector<SourceField> experiment_sources(const ExperimentConfig& config, const Geometry& sim, const Geometry& obs) {
  const std::uint64_t seed = derive_seed(config.seed, "sources");
  if (config.sources.kind == "block_wells") {
    std::vector<int> eligible;
    if (config.sources.fracture_free) {
      const auto a = fracture_free_blocks(sim);
      const auto b = fracture_free_blocks(obs);
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(eligible));
      if (eligible.size() < 2) throw std::invalid_argument("fewer than two fracture-free blocks for wells");
    }
    return sample_sources_ex1(sim.coarse, config.sources.count, config.sources.rate, seed, eligible);
  }
  return sample_sources_ex2(config.sources.count, config.n_steps, seed, config.sources.wells);
}

}  // namespace

ExperimentData generate_experiment_data(const ExperimentConfig& config) {
  config.validate();
  ExperimentData d;
  std::tie(d.simulation_geometry, d.observation_geometry) = build_experiment_geometries(config);
  const auto sources = experiment_sources(config, d.simulation_geometry, d.observation_geometry);

  {
    const CoarseModel sim(d.simulation_geometry, config.mobility, config.layers, config.dt, config.n_steps,
                          config.basis_update);
    d.simulation = generate_dataset(sim, sources, Label::simulation);
  }
  {
    const CoarseModel obs(d.observation_geometry, config.mobility, config.layers, config.dt, config.n_steps,
                          config.basis_update);
    d.observation = generate_dataset(obs, sources, Label::observation);
  }

  std::vector<int> ids(sources.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, "split"));
  std::shuffle(ids.begin(), ids.end(), rng);
  d.test_ids.assign(ids.begin(), ids.begin() + config.test_count);
  d.train_ids.assign(ids.begin() + config.test_count, ids.end());
  std::sort(d.test_ids.begin(), d.test_ids.end());
  std::sort(d.train_ids.begin(), d.train_ids.end());

  d.simulation_pairs = make_pairs(d.simulation, config.first_step, config.last_step);
  d.observation_pairs = make_pairs(d.simulation, d.observation, config.first_step, config.last_step);
  MixingPolicy policy = config.mixing;
  policy.seed = derive_seed(config.seed, "mixing");
  d.mixed_pairs = mix_datasets(d.simulation_pairs, d.observation_pairs, policy, d.simulation_geometry);
  return d;
}

void write_experiment_data(const std::string& out, const ExperimentData& data, const ExperimentConfig& config) {
  const std::string dir = out + "/datasets";
  fs::create_directories(dir);
  const nlohmann::json seeds{{"master", config.seed},
                             {"sources", derive_seed(config.seed, "sources")},
                             {"split", derive_seed(config.seed, "split")},
                             {"mixing", derive_seed(config.seed, "mixing")}};
  const auto write = [&](const std::string& name, const TrajectoryDataset& traj, const PairSet& pairs,
                         nlohmann::json extra) {
    extra["seeds"] = seeds;
    extra["pair_steps"] = {config.first_step, config.last_step};
    write_dataset(dir + "/" + name, traj, pairs, extra, config.dataset_csv);
  };
  write("simulation", data.simulation, data.simulation_pairs, {{"targets", "simulation"}});
  write("observation", data.observation, data.observation_pairs,
        {{"targets", "observation"}, {"inputs", "simulation"}});
  write("mixed", data.simulation, data.mixed_pairs,
        {{"targets", "mixed"}, {"inputs", "simulation"}, {"mixing", config.mixing}});
  auto split = open_out(dir + "/split.json");
  split << nlohmann::json{{"train", data.train_ids}, {"test", data.test_ids}}.dump(2) << '\n';
}

StoredData read_experiment_data(const std::string& out) {
  const std::string dir = out + "/datasets";
  StoredData d;
  d.simulation_pairs = read_pairs(dir + "/simulation");
  d.observation_pairs = read_pairs(dir + "/observation");
  d.mixed_pairs = read_pairs(dir + "/mixed");
  const auto split = read_json(dir + "/split.json");
  d.train_ids = split.at("train").get<std::vector<int>>();
  d.test_ids = split.at("test").get<std::vector<int>>();
  return d;
}

// ---------------------------------------------------------------------------------------------
// Training and evaluation

TrainedNetworks train_networks(const ExperimentConfig& config, const Geometry& simulation_geometry,
                               const std::array<PairSet, 3>& training, const std::optional<int>& radius) {
  TrainedNetworks out;
  out.mask_radius = radius;
  for (Role r : kRoles) {
    const int i = static_cast<int>(r);
    TrainConfig tc = config.networks[i];
    tc.seed = derive_seed(config.seed, "train/" + role_name(r));
    std::optional<InfluenceMask> mask;
    if (radius) mask = build_influence_mask(simulation_geometry, *radius, tc.hidden);
    try {
      out.results[i] = train(training[i], tc, mask ? &*mask : nullptr);
    } catch (const std::exception& e) {
      throw std::runtime_error("network N_" + role_name(r) + " (" + variant_name(radius) + "): " + e.what());
    }
  }
  return out;
}

VariantReport evaluate_networks(const ExperimentConfig& config, const std::array<const SurrogateModel*, 3>& nets,
                                const PairSet& test, const std::string& name, const std::optional<int>& radius) {
  VariantReport rep;
  rep.name = name;
  rep.mask_radius = radius;
  rep.sample = test.sample;
  rep.step = test.step;
  for (Role r : kRoles) {
    const int i = static_cast<int>(r);
    const Eigen::MatrixXd pred = nets[i]->predict(test.inputs);
    auto& errs = rep.one_step[i];
    errs.resize(test.size());
    for (int j = 0; j < test.size(); ++j) errs[j] = relative_error(pred.col(j), test.targets.col(j));
    rep.mean[i] = errs.empty() ? 0.0 : std::accumulate(errs.begin(), errs.end(), 0.0) / errs.size();
  }
  rep.ordering = compare_networks(rep.mean, config.slack);

  if (config.rollout_pre_steps > 0) {
    const int n = test.output_dim();
    std::vector<int> ids = test.sample;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const int final_step = config.first_step + config.rollout_pre_steps;
    for (int s : ids) {
      std::vector<int> cols;
      for (int k = config.first_step; k <= final_step; ++k) {
        int found = -1;
        for (int j = 0; j < test.size(); ++j)
          if (test.sample[j] == s && test.step[j] == k) found = j;
        if (found < 0) throw std::runtime_error("rollout: test source " + std::to_string(s) + " lacks step " +
                                                std::to_string(k));
        cols.push_back(found);
      }
      const Eigen::VectorXd initial = test.inputs.col(cols.front()).head(n);
      std::vector<Eigen::VectorXd> loads;
      for (int c : cols) loads.push_back(test.inputs.col(c).tail(test.input_dim() - n));
      const Eigen::VectorXd target = test.targets.col(cols.back());
      rep.rollout_sample.push_back(s);
      for (Role r : kRoles) {
        const int i = static_cast<int>(r);
        std::vector<const SurrogateModel*> chain(config.rollout_pre_steps, nets[static_cast<int>(Role::s)]);
        chain.push_back(nets[i]);
        rep.rollout[i].push_back(relative_error(rollout(chain, initial, loads), target));
      }
    }
    for (int i = 0; i < 3; ++i)
      rep.rollout_mean[i] = std::accumulate(rep.rollout[i].begin(), rep.rollout[i].end(), 0.0) /
                            static_cast<double>(rep.rollout[i].size());
  }
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Reports

nlohmann::json ErrorReport::to_json() const {
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : variants) {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t j = 0; j < v.sample.size(); ++j)
      per.push_back({{"sample", v.sample[j]},
                     {"step", v.step[j]},
                     {"o", v.one_step[0][j]},
                     {"m", v.one_step[1][j]},
                     {"s", v.one_step[2][j]}});
    nlohmann::json entry{
        {"name", v.name},
        {"mask_radius", v.mask_radius ? nlohmann::json(*v.mask_radius) : nlohmann::json("full")},
        {"test_pairs", v.sample.size()},
        {"mean_error_percent", role_triple(v.mean)},
        {"ordering",
         {{"o_within_m", v.ordering.o_within_m}, {"m_within_s", v.ordering.m_within_s}, {"passed", v.ordering.passed()}}},
        {"per_sample", per}};
    if (!v.history[0].empty())
      entry["final_training_loss"] = role_triple({v.history[0].back(), v.history[1].back(), v.history[2].back()});
    if (!v.rollout_sample.empty()) {
      nlohmann::json roll = nlohmann::json::array();
      for (std::size_t j = 0; j < v.rollout_sample.size(); ++j)
        roll.push_back({{"sample", v.rollout_sample[j]},
                        {"o", v.rollout[0][j]},
                        {"m", v.rollout[1][j]},
                        {"s", v.rollout[2][j]}});
      entry["rollout_mean_error_percent"] = role_triple(v.rollout_mean);
      entry["rollout_per_sample"] = roll;
    }
    vs.push_back(entry);
  }
  return {{"example", example}, {"seed", seed}, {"slack", slack}, {"units", "percent"}, {"variants", vs}};
}

void write_report(const std::string& out, const ErrorReport& report, bool complete) {
  fs::create_directories(out);
  nlohmann::json j = report.to_json();
  j["complete"] = complete;
  open_out(out + "/report.json") << j.dump(2) << '\n';

  auto csv = open_out(out + "/errors_per_sample.csv");
  csv << "variant,sample,step,err_o,err_m,err_s\n";
  std::string line;
  bool any_rollout = false;
  for (const auto& v : report.variants) {
    any_rollout = any_rollout || !v.rollout_sample.empty();
    for (std::size_t j = 0; j < v.sample.size(); ++j) {
      line = v.name + "," + std::to_string(v.sample[j]) + "," + std::to_string(v.step[j]);
      for (int i = 0; i < 3; ++i) {
        line += ',';
        append_double(line, v.one_step[i][j]);
      }
      csv << line << '\n';
    }
  }
  if (!any_rollout) return;
  auto roll = open_out(out + "/rollout_errors_per_sample.csv");
  roll << "variant,sample,err_o,err_m,err_s\n";
  for (const auto& v : report.variants) {
    for (std::size_t j = 0; j < v.rollout_sample.size(); ++j) {
      line = v.name + "," + std::to_string(v.rollout_sample[j]);
      for (int i = 0; i < 3; ++i) {
        line += ',';
        append_double(line, v.rollout[i][j]);
      }
      roll << line << '\n';
    }
  }
}

void write_loss_histories(const std::string& out, const ErrorReport& report) {
  fs::create_directories(out);
  for (Role r : kRoles) {
    const int i = static_cast<int>(r);
    auto csv = open_out(out + "/loss_history_" + role_name(r) + ".csv");
    std::string line = "epoch";
    std::size_t rows = 0;
    for (const auto& v : report.variants) {
      line += "," + v.name;
      rows = std::max(rows, v.history[i].size());
    }
    csv << line << '\n';
    for (std::size_t e = 0; e < rows; ++e) {
      line = std::to_string(e);
      for (const auto& v : report.variants) {
        line += ',';
        if (e < v.history[i].size()) append_double(line, v.history[i][e]);
      }
      csv << line << '\n';
    }
  }
}

namespace {

void write_incomplete(const std::string& out, const ExperimentConfig& config, const ErrorReport& report,
                      const StageError& error) {
  try {
    fs::create_directories(out);
    nlohmann::json j = report.to_json();
    j["example"] = config.example;
    j["complete"] = false;
    j["failed_stage"] = error.stage();
    j["error"] = error.what();
    open_out(out + "/report.json") << j.dump(2) << '\n';
  } catch (...) {
  }
}

}  // namespace

ErrorReport run_example(const ExperimentConfig& config) {
  ErrorReport report;
  report.example = config.example;
  report.seed = config.seed;
  report.slack = config.slack;
  const std::string& out = config.output;
  try {
    staged("config", [&] {
      config.validate();
      fs::create_directories(out);
      open_out(out + "/config.json") << nlohmann::json(config).dump(2) << '\n';
    });
    const ExperimentData data = staged("gen-data", [&] { return generate_experiment_data(config); });
    staged("gen-data", [&] {
      write_geometry_spec(data.simulation_geometry.spec, out + "/geometry_simulation.json");
      write_geometry_spec(data.observation_geometry.spec, out + "/geometry_observation.json");
      write_experiment_data(out, data, config);
    });
    const std::array<PairSet, 3> training{data.training(Role::o), data.training(Role::m), data.training(Role::s)};
    const PairSet test = data.testing();
    fs::create_directories(out + "/models");
    for (const auto& radius : config.mask_radii) {
      const std::string name = variant_name(radius);
      const TrainedNetworks nets =
          staged("train", [&] { return train_networks(config, data.simulation_geometry, training, radius); });
      staged("train", [&] {
        for (Role r : kRoles)
          save_model(nets.results[static_cast<int>(r)].model,
                     out + "/models/N_" + role_name(r) + "_" + name + ".model");
      });
      VariantReport rep = staged("evaluate", [&] {
        return evaluate_networks(
            config, {&nets.results[0].model, &nets.results[1].model, &nets.results[2].model}, test, name, radius);
      });
      for (int i = 0; i < 3; ++i) {
        rep.history[i].push_back(nets.results[i].initial_loss);
        rep.history[i].insert(rep.history[i].end(), nets.results[i].history.begin(), nets.results[i].history.end());
      }
      report.variants.push_back(std::move(rep));
    }
    staged("report", [&] {
      write_report(out, report);
      write_loss_histories(out, report);
    });
  } catch (const StageError& e) {
    write_incomplete(out, config, report, e);
    throw;
  }
  return report;
}

}  // namespace dmml
