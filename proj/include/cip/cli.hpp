#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cip/eval.hpp"
#include "cip/model.hpp"
#include "cip/scenario_gen.hpp"
#include "cip/scenario_io.hpp"
#include "cip/training.hpp"
#include "cip/util.hpp"

namespace cip::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr const char* kOutRootEnv = "CIP_OUT";

namespace detail {

inline std::string resolve_out_dir(const std::string& out, const std::string& command) {
  if (!out.empty()) return out;
  const char* root = std::getenv(kOutRootEnv);
  if (root && *root) return std::string(root) + "/" + command;
  throw CLI::ValidationError("--out", "no output directory given and " +
                                          std::string(kOutRootEnv) + " is not set");
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_resolved_config(const fs::path& dir, const nlohmann::json& cfg) {
  write_text(dir / "resolved_config.json", cfg.dump(2) + "\n");
}

// Overlays config-file values onto options the user did not pass on the
// command line. Unknown keys are rejected.
inline void apply_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config file: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config file: " + std::string(e.what()));
  }
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ValidationError("config file: unknown key '" + key + "'");
    }
    if (opt->count() > 0) continue;  // explicit flags win
    std::string text = value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(text);
    opt->run_callback();
  }
}

inline ConstraintSet parse_constraints(const std::string& spec) {
  ConstraintSet out;
  if (spec == "none" || spec.empty()) return out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "collision") out.insert(ConstraintKind::collision);
    else if (tok == "out_of_map") out.insert(ConstraintKind::out_of_map);
    else if (tok == "stuck") out.insert(ConstraintKind::stuck);
    else
      throw CLI::ValidationError(
          "--constraints", "unknown constraint '" + tok +
                               "' (valid: none, collision, out_of_map, stuck)");
  }
  return out;
}

inline std::string constraints_name(const ConstraintSet& set) {
  if (set.empty()) return "none";
  std::string out;
  if (set.count(ConstraintKind::collision)) out += "collision,";
  if (set.count(ConstraintKind::out_of_map)) out += "out_of_map,";
  if (set.count(ConstraintKind::stuck)) out += "stuck,";
  out.pop_back();
  return out;
}

// Deterministic per-index scenario derivation for a suite.
inline Scenario suite_scenario(const std::string& suite, std::uint64_t base_seed, int index,
                               int agent_count, std::string* kind_out) {
  std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(index));
  SplitMix64 rng(seed);
  std::string kind = suite;
  if (suite == "mixed") kind = index % 2 == 0 ? "intersection" : "jam";
  ScenarioConfig cfg;
  if (kind == "intersection") {
    cfg.agent_count = agent_count >= 0 ? agent_count : rng.uniform_int(2, 6);
    cfg.ego_route = static_cast<int>(rng.next_u64() % 3);
    if (kind_out) *kind_out = "intersection";
    return generate_intersection(seed, cfg);
  }
  cfg.agent_count = agent_count >= 0 ? std::max(agent_count, 1) : rng.uniform_int(2, 5);
  cfg.stop_duration = rng.uniform(6.0, 8.0);
  if (kind_out) *kind_out = "jam";
  return generate_trafficjam(seed, cfg);
}

inline std::vector<fs::path> suite_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    for (const auto& entry : manifest.at("scenarios"))
      files.push_back(dir / entry.at("file").get<std::string>());
  } else {
    for (const auto& e : fs::directory_iterator(dir)) {
      std::string name = e.path().filename().string();
      if (name.rfind("scenario_", 0) == 0 && e.path().extension() == ".json")
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ValidationError("suite: no scenario files in " + dir.string());
  return files;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen

inline int cmd_gen(const std::string& suite, int count, std::uint64_t seed,
                   const std::string& out_dir, bool force, int agent_count) {
  fs::path dir = out_dir;
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "scenario_%03d.json", i);
    if (fs::exists(dir / name) && !force)
      throw ValidationError("gen: " + (dir / name).string() +
                            " exists; pass --force to overwrite");
  }
  nlohmann::json manifest;
  manifest["suite"] = suite;
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["derivation"] = "scenario_seed = splitmix64_mix(seed ^ (index + 1))";
  manifest["scenarios"] = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    std::string kind;
    Scenario s = detail::suite_scenario(suite, seed, i, agent_count, &kind);
    char name[64];
    std::snprintf(name, sizeof(name), "scenario_%03d.json", i);
    save_scenario(s, (dir / name).string());
    manifest["scenarios"].push_back({{"index", i},
                                     {"kind", kind},
                                     {"seed", derive_seed(seed, i)},
                                     {"file", std::string(name)}});
  }
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  detail::write_resolved_config(dir, {{"command", "gen"},
                                      {"suite", suite},
                                      {"count", count},
                                      {"seed", seed},
                                      {"agent_count", agent_count},
                                      {"force", force}});
  std::cout << "gen: wrote " << count << " scenarios to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainCliOptions {
  std::string suite_dir;
  std::string out_dir;
  std::string constraints = "none";
  std::uint64_t seed = 0;
  int epochs = 10;
  double eta = 0.02;
  double lambda = 1.0;
  int batch = 8;
  std::string label_dump;  // optional JSONL path
};

inline int cmd_train(const TrainCliOptions& opt) {
  fs::path dir = opt.out_dir;
  fs::create_directories(dir);
  std::vector<Scenario> corpus;
  for (const auto& f : detail::suite_files(opt.suite_dir))
    corpus.push_back(load_scenario(f.string()));

  TrainConfig cfg;
  cfg.constraints = detail::parse_constraints(opt.constraints);
  cfg.seed = opt.seed;
  cfg.epochs = opt.epochs;
  cfg.eta = opt.eta;
  cfg.lambda_constraint = opt.lambda;
  cfg.batch_size = opt.batch;

  std::ofstream dump_stream;
  std::function<void(const TickSample&)> dump;
  if (!opt.label_dump.empty()) {
    dump_stream.open(opt.label_dump);
    if (!dump_stream) throw std::runtime_error("train: cannot write " + opt.label_dump);
    dump = [&dump_stream](const TickSample& tick) {
      nlohmann::json j;
      j["scenario_id"] = tick.scenario_id;
      j["tick"] = tick.t0;
      j["best_index"] = tick.labels ? tick.labels->best_index : -1;
      j["skipped"] = !tick.labels.has_value();
      auto labels = nlohmann::json::array();
      if (tick.labels) {
        for (const auto& l : tick.labels->labels) {
          if (l.tag == CandidateLabel::Tag::best) labels.push_back("best");
          else if (l.tag == CandidateLabel::Tag::unlabeled) labels.push_back("unlabeled");
          else if (l.kind == ConstraintKind::collision) labels.push_back("collision");
          else if (l.kind == ConstraintKind::out_of_map) labels.push_back("out_of_map");
          else labels.push_back("stuck");
        }
      }
      j["labels"] = std::move(labels);
      dump_stream << j.dump() << "\n";
    };
  }

  auto checkpoint_path = dir / "checkpoint.json";
  TrainResult result =
      train(corpus, cfg,
            [&](int, const ModelParams& m) { save_checkpoint(m, checkpoint_path.string()); },
            dump);
  save_checkpoint(result.params, checkpoint_path.string());

  std::string log = "epoch,reward_loss,constraint_loss,wall_seconds\n";
  for (const auto& row : result.history) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.3f\n", row.epoch, row.reward_loss,
                  row.constraint_loss, row.wall_seconds);
    log += buf;
  }
  detail::write_text(dir / "train_log.csv", log);
  detail::write_resolved_config(dir, {{"command", "train"},
                                      {"suite", opt.suite_dir},
                                      {"constraints", opt.constraints},
                                      {"seed", opt.seed},
                                      {"epochs", opt.epochs},
                                      {"eta", opt.eta},
                                      {"lambda", opt.lambda},
                                      {"batch", opt.batch}});
  std::cout << "train: constraints=" << opt.constraints << " epochs=" << opt.epochs
            << " skipped_ticks=" << result.skipped_ticks << " -> "
            << checkpoint_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCliOptions {
  std::string suite_dir;
  std::string checkpoint;
  std::string out_dir;
  std::string mode = "constrained";
  int jobs = 1;
};

inline int cmd_eval(const EvalCliOptions& opt) {
  fs::path dir = opt.out_dir;
  fs::create_directories(dir);
  if (opt.mode != "baseline" && opt.mode != "constrained")
    throw CLI::ValidationError("--mode", "must be baseline or constrained");
  ScoringMode mode = opt.mode == "baseline" ? ScoringMode::baseline : ScoringMode::constrained;

  ModelParams model = load_checkpoint(opt.checkpoint);
  auto files = detail::suite_files(opt.suite_dir);
  std::vector<Scenario> scenarios;
  scenarios.reserve(files.size());
  for (const auto& f : files) scenarios.push_back(load_scenario(f.string()));

  std::vector<EpisodeResult> episodes(scenarios.size());
  int jobs = std::max(1, opt.jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= scenarios.size()) return;
      episodes[i] = run_closed_loop(scenarios[i], model, mode);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::string config_id = opt.mode;
  MetricsReport report = metrics(episodes, config_id);
  detail::write_text(dir / "metrics.csv",
                     metrics_csv_header() + "\n" + metrics_csv_row(report) + "\n");
  {
    std::ofstream out(dir / "episodes.jsonl");
    if (!out) throw std::runtime_error("eval: cannot write episodes.jsonl");
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      nlohmann::json j = episode_to_json(episodes[i]);
      j["scenario_file"] = files[i].string();
      out << j.dump() << "\n";
    }
  }
  detail::write_resolved_config(dir, {{"command", "eval"},
                                      {"suite", opt.suite_dir},
                                      {"checkpoint", opt.checkpoint},
                                      {"mode", opt.mode},
                                      {"jobs", opt.jobs}});
  std::cout << metrics_csv_header() << "\n" << metrics_csv_row(report) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// viz

inline int cmd_viz(const std::string& episodes_path, int index, const std::string& scenario_path,
                   const std::string& out_dir) {
  std::ifstream in(episodes_path);
  if (!in) throw ValidationError("viz: cannot open " + episodes_path);
  std::string line;
  nlohmann::json record;
  int row = 0;
  bool found = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row++ == index) {
      record = nlohmann::json::parse(line);
      found = true;
      break;
    }
  }
  if (!found)
    throw ValidationError("viz: episode index " + std::to_string(index) + " not found in " +
                          episodes_path);
  EpisodeResult ep = episode_from_json(record);
  std::string spath = scenario_path;
  if (spath.empty() && record.contains("scenario_file"))
    spath = record.at("scenario_file").get<std::string>();
  if (spath.empty())
    throw ValidationError("viz: no scenario file recorded; pass --scenario");
  Scenario scenario = load_scenario(spath);

  fs::create_directories(out_dir);
  export_attention(scenario, ep, out_dir);
  std::cout << "viz: wrote " << ep.ticks.size() << " frames to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"Constraint-augmented imitation-learning motion planning lab"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic scenario suite");
  std::string gen_suite = "mixed", gen_out, gen_config;
  int gen_count = 10, gen_agents = -1;
  std::uint64_t gen_seed = 0;
  bool gen_force = false;
  gen->add_option("--suite", gen_suite, "intersection|jam|mixed")
      ->check(CLI::IsMember({"intersection", "jam", "mixed"}));
  gen->add_option("--count", gen_count, "number of scenarios");
  gen->add_option("--seed", gen_seed, "suite seed");
  gen->add_option("--agents", gen_agents, "agent count override (-1 = per-scenario)");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--config", gen_config, "JSON config file (flags win)");
  gen->add_flag("--force", gen_force, "overwrite existing scenario files");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a suite");
  TrainCliOptions topt;
  std::string train_config;
  train_cmd->add_option("--suite", topt.suite_dir, "suite directory")->required();
  train_cmd->add_option("--constraints", topt.constraints,
                        "none|collision|collision,out_of_map|collision,out_of_map,stuck");
  train_cmd->add_option("--seed", topt.seed, "training seed");
  train_cmd->add_option("--epochs", topt.epochs, "training epochs");
  train_cmd->add_option("--eta", topt.eta, "SGD learning rate");
  train_cmd->add_option("--lambda", topt.lambda, "constraint loss weight");
  train_cmd->add_option("--batch", topt.batch, "ticks per SGD step");
  train_cmd->add_option("--label-dump", topt.label_dump, "write per-tick labels (JSONL)");
  train_cmd->add_option("--out", topt.out_dir, "output directory");
  train_cmd->add_option("--config", train_config, "JSON config file (flags win)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Closed-loop evaluation of a checkpoint");
  EvalCliOptions eopt;
  std::string eval_config;
  eval_cmd->add_option("--suite", eopt.suite_dir, "suite directory")->required();
  eval_cmd->add_option("--checkpoint", eopt.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--mode", eopt.mode, "baseline|constrained");
  eval_cmd->add_option("--jobs", eopt.jobs, "parallel episodes");
  eval_cmd->add_option("--out", eopt.out_dir, "output directory");
  eval_cmd->add_option("--config", eval_config, "JSON config file (flags win)");

  // viz
  auto* viz = app.add_subcommand("viz", "Render attention SVG frames for an episode");
  std::string viz_episodes, viz_scenario, viz_out;
  int viz_index = 0;
  viz->add_option("--episodes", viz_episodes, "episodes.jsonl from eval")->required();
  viz->add_option("--index", viz_index, "episode row index");
  viz->add_option("--scenario", viz_scenario, "scenario file override");
  viz->add_option("--out", viz_out, "output directory");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "cip");
  argv.reserve(storage.size());
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (gen->parsed()) {
      if (!gen_config.empty()) detail::apply_config_file(*gen, gen_config);
      return cmd_gen(gen_suite, gen_count, gen_seed,
                     detail::resolve_out_dir(gen_out, "gen"), gen_force, gen_agents);
    }
    if (train_cmd->parsed()) {
      if (!train_config.empty()) detail::apply_config_file(*train_cmd, train_config);
      detail::parse_constraints(topt.constraints);  // validate early
      topt.out_dir = detail::resolve_out_dir(topt.out_dir, "train");
      return cmd_train(topt);
    }
    if (eval_cmd->parsed()) {
      if (!eval_config.empty()) detail::apply_config_file(*eval_cmd, eval_config);
      eopt.out_dir = detail::resolve_out_dir(eopt.out_dir, "eval");
      return cmd_eval(eopt);
    }
    if (viz->parsed())
      return cmd_viz(viz_episodes, viz_index, viz_scenario,
                     detail::resolve_out_dir(viz_out, "viz"));
    return kExitUsage;
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const GeometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace cip::cli
