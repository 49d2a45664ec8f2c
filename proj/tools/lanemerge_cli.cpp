// Command line entry point: run, batch, export-training, check.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lanemerge/config.hpp"
#include "lanemerge/harness.hpp"
#include "lanemerge/predictors.hpp"

namespace fs = std::filesystem;
using namespace lanemerge;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string predictor;
  std::string regime;
  std::optional<int> episodes;
  std::string out;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out) {
  cmd->add_option("--config", f.config_path, "Scenario/config JSON file");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--predictor", f.predictor, "cv | oracle | external")
      ->check(CLI::IsMember({"cv", "oracle", "external"}));
  cmd->add_option("--regime", f.regime, "coop | mixed | agg")
      ->check(CLI::IsMember({"coop", "mixed", "agg"}));
  cmd->add_option("--episodes", f.episodes, "Episodes per cell")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
  if (with_out) cmd->add_option("--out", f.out, "Output directory");
}

Config resolve(const CommonFlags& f) {
  std::vector<std::string> warnings;
  Config c = f.config_path.empty() ? parse_config("", &warnings)
                                   : load_config(f.config_path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (f.seed) c.harness.seed = *f.seed;
  if (!f.predictor.empty()) c.sim.predictor.kind = *parse_predictor_kind(f.predictor);
  if (!f.regime.empty()) c.harness.regime = *parse_regime(f.regime);
  if (f.episodes) c.harness.episodes = *f.episodes;
  if (f.workers) c.harness.workers = *f.workers;
  auto errors = validate(c);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

int cmd_run(const CommonFlags& f) {
  Config c = resolve(f);
  const fs::path out = f.out.empty() ? fs::path("out/run") : fs::path(f.out);
  c.sim.controller.workers = resolve_workers(c.harness.workers);
  write_manifest(c, c.harness.seed, out,
                 {"steps.jsonl", "trajectory.csv", "controls.csv", "result.json"});

  const Scenario scenario = build_scenario(c.sim, c.harness.regime, c.harness.seed);
  EpisodeOptions opts;
  opts.record_trajectory = true;
  const EpisodeResult r = run_episode(scenario, c.sim, opts);
  write_step_log(r, out / "steps.jsonl");
  emit_plot_data(r, out);
  {
    std::ofstream res(out / "result.json");
    res << "{\"success\": " << (r.success ? "true" : "false")
        << ", \"collision\": " << (r.collision ? "true" : "false")
        << ", \"timed_out\": " << (r.timed_out ? "true" : "false") << ", \"time_to_merge\": ";
    if (r.time_to_merge) {
      res << *r.time_to_merge;
    } else {
      res << "null";
    }
    res << ", \"min_distance\": " << r.min_distance << ", \"steps\": " << r.steps << "}\n";
  }
  std::printf("seed %llu regime %s predictor %s: %s", static_cast<unsigned long long>(r.seed),
              std::string(to_string(r.regime)).c_str(), r.predictor.c_str(),
              r.success ? "merged" : (r.collision ? "COLLISION" : "timeout"));
  if (r.time_to_merge) std::printf(" at %.1f s", *r.time_to_merge);
  std::printf(", min distance %.3f m, %d steps -> %s\n", r.min_distance, r.steps,
              out.string().c_str());
  return 0;
}

int cmd_batch(const CommonFlags& f) {
  Config c = resolve(f);
  const fs::path out = f.out.empty() ? fs::path("out/batch") : fs::path(f.out);
  write_manifest(c, c.harness.seed, out, {"summary.csv", "summary.txt", "episodes.csv"});

  BatchSpec spec;
  spec.episodes = c.harness.episodes;
  spec.base_seed = c.harness.seed;
  spec.workers = resolve_workers(c.harness.workers);
  if (!f.regime.empty()) spec.regimes = {c.harness.regime};
  if (!f.predictor.empty()) spec.predictors = {c.sim.predictor.kind};

  std::size_t done = 0;
  const std::size_t total = spec.regimes.size() * spec.predictors.size() * spec.episodes;
  const BatchSummary summary = run_batch(spec, c.sim, [&](const EpisodeResult&) {
    if (++done % 10 == 0 || done == total) std::fprintf(stderr, "\r%zu/%zu episodes", done, total);
  });
  std::fprintf(stderr, "\n");

  write_summary_csv(summary, out / "summary.csv");
  const std::string table = format_summary_table(summary);
  std::ofstream(out / "summary.txt") << table;
  std::ofstream eps(out / "episodes.csv");
  eps << "regime,predictor,seed,success,collision,time_to_merge,min_distance,steps\n";
  eps.precision(17);
  for (const EpisodeResult& e : summary.episodes) {
    eps << to_string(e.regime) << ',' << e.predictor << ',' << e.seed << ',' << e.success << ','
        << e.collision << ',';
    if (e.time_to_merge) eps << *e.time_to_merge;
    eps << ',' << e.min_distance << ',' << e.steps << '\n';
  }
  std::cout << table;
  return 0;
}

int cmd_export(const CommonFlags& f, double noise, double duration) {
  Config c = resolve(f);
  const fs::path out = f.out.empty() ? fs::path("out/training") : fs::path(f.out);
  write_manifest(c, c.harness.seed, out, {"training.csv"});
  const fs::path csv = out / "training.csv";
  const int t_obs = c.sim.predictor.t_obs;
  const int t_pred = c.sim.predictor.t_pred;
  const int steps = static_cast<int>(std::lround(duration / c.sim.traffic.dt));
  std::size_t windows = 0;
  for (int e = 0; e < c.harness.episodes; ++e) {
    const std::uint64_t seed = c.harness.seed + static_cast<std::uint64_t>(e);
    World world = build_traffic(c.sim, c.harness.regime, seed);
    std::vector<TrafficSnapshot> frames;
    frames.push_back(TrafficSnapshot::capture(world));
    for (int k = 0; k < steps; ++k) {
      world.step_without_ego();
      frames.push_back(TrafficSnapshot::capture(world));
    }
    windows += export_training_batch(frames, csv, t_obs, t_pred, noise,
                                     derive_seed(seed, Stream::kExport),
                                     static_cast<int>(windows), e > 0);
  }
  std::printf("%zu windows -> %s\n", windows, csv.string().c_str());
  return 0;
}

int cmd_check(const CommonFlags& f, bool dump) {
  const Config c = resolve(f);
  if (dump) std::cout << config_to_json(c) << '\n';
  std::cout << "config ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-traffic lane merge simulation with a sampling MPC ego controller"};
  app.require_subcommand(1);

  CommonFlags run_flags, batch_flags, export_flags, check_flags;
  auto* run = app.add_subcommand("run", "Simulate one episode and write logs and plot data");
  add_common(run, run_flags, true);
  auto* batch = app.add_subcommand("batch", "Monte Carlo grid over regimes and predictors");
  add_common(batch, batch_flags, true);
  auto* exp = app.add_subcommand("export-training", "Write predictor training windows");
  add_common(exp, export_flags, true);
  double noise = 0.0;
  double duration = 40.0;
  exp->add_option("--noise", noise, "Uniform position noise amplitude on observed rows (m)")
      ->check(CLI::NonNegativeNumber);
  exp->add_option("--duration", duration, "Simulated seconds per episode")
      ->check(CLI::PositiveNumber);
  auto* check = app.add_subcommand("check", "Validate a config file");
  add_common(check, check_flags, false);
  bool dump = false;
  check->add_flag("--dump", dump, "Print the resolved config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*batch) return cmd_batch(batch_flags);
    if (*exp) return cmd_export(export_flags, noise, duration);
    if (*check) return cmd_check(check_flags, dump);
  } catch (const ConfigError& e) {
    for (const auto& msg : e.errors()) std::cerr << "config error: " << msg << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
