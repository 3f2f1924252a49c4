// Command line front end for the experiment pipeline.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dmml/datagen.hpp"
#include "dmml/fine_solver.hpp"
#include "dmml/harness.hpp"
#include "dmml/io.hpp"
#include "dmml/nlmc.hpp"

namespace fs = std::filesystem;
using namespace dmml;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_experiment(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.output = *c.out;
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed override");
  sub->add_option("--out", c.out, "output directory override");
}

void print_report(const ErrorReport& report) {
  for (const auto& v : report.variants) {
    std::cout << "variant " << v.name << ": mean one-step error (%) o=" << v.mean[0] << " m=" << v.mean[1]
              << " s=" << v.mean[2] << (v.ordering.passed() ? "  [ordering ok]" : "  [ordering violated]") << '\n';
    if (!v.rollout_sample.empty())
      std::cout << "variant " << v.name << ": mean final-time rollout error (%) o=" << v.rollout_mean[0]
                << " m=" << v.rollout_mean[1] << " s=" << v.rollout_mean[2] << '\n';
  }
}

void gen_geometry(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string out = cfg.output;
  fs::create_directories(out);
  const auto [sim, obs] = build_experiment_geometries(cfg);
  write_geometry_spec(sim.spec, out + "/geometry_simulation.json");
  write_geometry_spec(obs.spec, out + "/geometry_observation.json");

  nlohmann::json summary{{"dofs", sim.index.size()}, {"layers", cfg.layers}};
  for (const auto* g : {&sim, &obs}) {
    const std::string name = g == &sim ? "simulation" : "observation";
    const CoarseModel model(*g, cfg.mobility, cfg.layers, cfg.dt, cfg.n_steps, BasisUpdate::frozen);
    write_coarse_system(out + "/coarse_" + name, *g, model.system(0));
    summary[name] = {{"geometry_hash", hash_hex(g->hash)},
                     {"fine_vertices", g->fine.vertex_count()},
                     {"fracture_edges", g->fine.fracture_edges.size()},
                     {"max_constraint_residual", model.basis(0).max_constraint_residual}};
  }

  // Reference trajectory for the first sampled source on the simulation geometry.
  const std::uint64_t seed = derive_seed(cfg.seed, "sources");
  const SourceField source =
      cfg.sources.kind == "block_wells"
          ? sample_sources_ex1(sim.coarse, 1, cfg.sources.rate, seed, fracture_free_blocks(sim)).front()
          : sample_sources_ex2(1, cfg.n_steps, seed, cfg.sources.wells).front();
  const auto fine =
      solve_fine(sim, cfg.mobility, source, Eigen::VectorXd::Zero(sim.fine.vertex_count()), cfg.n_steps, cfg.dt);
  const CoarseModel model(sim, cfg.mobility, cfg.layers, cfg.dt, cfg.n_steps, cfg.basis_update);
  const auto coarse = model.trajectory(source, Eigen::VectorXd::Zero(model.size()));
  write_trajectory(out + "/fine_reference", fine, cfg.dt, sim, source, cfg.mobility);
  write_trajectory(out + "/coarse_reference", coarse, cfg.dt, sim, source, cfg.mobility);
  const double err = relative_error(coarse.back(), continuum_average(sim, fine.back()));
  summary["reference_final_error_percent"] = err;
  std::ofstream(out + "/geometry_summary.json") << summary.dump(2) << '\n';
  std::cout << "continua: " << sim.index.size() << ", coarse vs averaged fine at final time: " << err << "%\n";
}

void gen_data(const ExperimentConfig& cfg) {
  const ExperimentData data = generate_experiment_data(cfg);
  write_experiment_data(cfg.output, data, cfg);
  std::cout << "pairs: " << data.simulation_pairs.size() << " (train sources " << data.train_ids.size()
            << ", test sources " << data.test_ids.size() << ")\n";
}

void train_verb(const ExperimentConfig& cfg) {
  cfg.validate();
  const StoredData data = read_experiment_data(cfg.output);
  const auto geoms = build_experiment_geometries(cfg);
  const std::array<PairSet, 3> training{data.observation_pairs.select_samples(data.train_ids),
                                        data.mixed_pairs.select_samples(data.train_ids),
                                        data.simulation_pairs.select_samples(data.train_ids)};
  fs::create_directories(cfg.output + "/models");
  ErrorReport histories;
  for (const auto& radius : cfg.mask_radii) {
    const TrainedNetworks nets = train_networks(cfg, geoms.first, training, radius);
    VariantReport v;
    v.name = variant_name(radius);
    for (Role r : kRoles) {
      const int i = static_cast<int>(r);
      save_model(nets.results[i].model, cfg.output + "/models/N_" + role_name(r) + "_" + v.name + ".model");
      v.history[i].push_back(nets.results[i].initial_loss);
      v.history[i].insert(v.history[i].end(), nets.results[i].history.begin(), nets.results[i].history.end());
      std::cout << "N_" << role_name(r) << " (" << v.name << "): loss " << nets.results[i].initial_loss << " -> "
                << (nets.results[i].history.empty() ? nets.results[i].initial_loss : nets.results[i].history.back())
                << '\n';
    }
    histories.variants.push_back(std::move(v));
  }
  write_loss_histories(cfg.output, histories);
}

void evaluate_verb(const ExperimentConfig& cfg) {
  cfg.validate();
  const StoredData data = read_experiment_data(cfg.output);
  const PairSet test = data.observation_pairs.select_samples(data.test_ids);
  ErrorReport report;
  report.example = cfg.example;
  report.seed = cfg.seed;
  report.slack = cfg.slack;
  for (const auto& radius : cfg.mask_radii) {
    const std::string name = variant_name(radius);
    std::array<SurrogateModel, 3> models;
    for (Role r : kRoles)
      models[static_cast<int>(r)] = load_model(cfg.output + "/models/N_" + role_name(r) + "_" + name + ".model");
    report.variants.push_back(evaluate_networks(cfg, {&models[0], &models[1], &models[2]}, test, name, radius));
  }
  write_report(cfg.output, report);
  print_report(report);
}

template <class F>
int run_stage(const std::string& stage, F&& f) {
  try {
    f();
    return 0;
  } catch (const StageError& e) {
    std::cerr << "error " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "] " << e.what() << '\n';
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale fractured-media simulation with learned coarse time stepping"};
  app.require_subcommand(1);
  Common common;
  auto* geo = app.add_subcommand("gen-geometry", "build geometries, export coarse systems and a reference run");
  auto* data = app.add_subcommand("gen-data", "generate simulation, observation and mixed datasets");
  auto* tr = app.add_subcommand("train", "train N_o, N_m and N_s on stored datasets");
  auto* ev = app.add_subcommand("evaluate", "evaluate stored models and write the error report");
  auto* run = app.add_subcommand("run-example", "run the whole pipeline");
  for (auto* sub : {geo, data, tr, ev, run}) add_common(sub, common);

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg;
  if (const int rc = run_stage("config", [&] { cfg = load(common); }); rc != 0) return 2;

  if (geo->parsed()) return run_stage("gen-geometry", [&] { gen_geometry(cfg); });
  if (data->parsed()) return run_stage("gen-data", [&] { gen_data(cfg); });
  if (tr->parsed()) return run_stage("train", [&] { train_verb(cfg); });
  if (ev->parsed()) return run_stage("evaluate", [&] { evaluate_verb(cfg); });
  return run_stage("run-example", [&] { print_report(run_example(cfg)); });
}
