#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lanemerge/controller.hpp"
#include "lanemerge/predictors.hpp"
#include "lanemerge/world.hpp"

namespace lanemerge {

std::string_view to_string(Regime regime);
std::optional<Regime> parse_regime(std::string_view text);

struct ScenarioConfig {
  int lane_count = 3;
  double lane_width = 3.7;
  int ego_lane = 0;
  int target_lane = 1;
  Range ego_x{5.0, 15.0};
  Range ego_v{0.0, 3.0};
  double stopped_offset = 5.0;  // stopped vehicle center beyond x_end
  double warmup = 10.0;         // s of traffic-only simulation before the ego appears
  double time_limit = 40.0;
  int capture_steps = 2;  // consecutive captured steps that complete the merge
  int placement_retries = 8;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct PredictorConfig {
  PredictorKind kind = PredictorKind::kGroundTruth;
  int t_obs = 8;
  int t_pred = 2;
  std::string command;  // external predictor only
  double deadline_ms = 50.0;

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

struct SimulationConfig {
  ControllerConfig controller;
  TrafficConfig traffic;
  ScenarioConfig scenario;
  PredictorConfig predictor;

  friend bool operator==(const SimulationConfig&, const SimulationConfig&) = default;
};

std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config);

struct Scenario {
  World world;  // ego, stopped vehicle and warmed-up traffic at t = 0
  Regime regime;
  std::uint64_t seed = 0;
  int ego_id = -1;
  int stopped_id = -1;
  double target_y = 0.0;
  double time_limit = 40.0;
};

// Throws std::runtime_error when no collision-free placement is found.
Scenario build_scenario(const SimulationConfig& config, Regime regime, std::uint64_t seed);

struct StepLog {
  double t = 0.0;
  VehicleState ego;
  ControlInput input;
  ManeuverMode mode = ManeuverMode::kKeep;
  double cost = 0.0;  // selected candidate, infinity on fallback
  int feasible = 0;
  double margin = 0.0;  // smallest pair_distance between the ego and any vehicle
  double min_gap = 0.0;
  double latency_s = 0.0;
};

struct TrajectoryRow {
  int step = 0;
  double t = 0.0;
  int id = -1;
  VehicleKind kind = VehicleKind::kDriver;
  VehicleState state;
  BodyGeometry geom;
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  Regime regime = Regime::kMixed;
  std::string predictor;
  bool success = false;
  bool collision = false;
  bool timed_out = false;
  std::optional<double> time_to_merge;
  double min_distance = 0.0;
  int steps = 0;
  std::vector<StepLog> log;
  std::vector<TrajectoryRow> trajectory;  // every vehicle at every step
};

struct EpisodeOptions {
  bool record_trajectory = false;
  SolveOptions solve;
  // Called after every controller step with the solver output.
  std::function<void(const World&, const SolveResult&)> on_step;
};

EpisodeResult run_episode(const Scenario& scenario, const SimulationConfig& config,
                          const EpisodeOptions& options = {});

struct CellSummary {
  Regime regime = Regime::kMixed;
  PredictorKind predictor = PredictorKind::kGroundTruth;
  int episodes = 0;
  int successes = 0;
  int collisions = 0;
  double success_rate = 0.0;  // percent
  double time_to_merge_mean = 0.0;
  double time_to_merge_std = 0.0;
  double min_distance_mean = 0.0;
  double min_distance_std = 0.0;
};

struct BatchSummary {
  std::vector<CellSummary> cells;
  std::vector<EpisodeResult> episodes;  // cell-major, then by seed

  const CellSummary* cell(Regime regime, PredictorKind predictor) const;
};

struct BatchSpec {
  std::vector<Regime> regimes{Regime::kCooperative, Regime::kMixed, Regime::kAggressive};
  std::vector<PredictorKind> predictors{PredictorKind::kConstantVelocity,
                                        PredictorKind::kGroundTruth};
  int episodes = 100;
  std::uint64_t base_seed = 1;
  int workers = 1;  // concurrent episodes
  bool keep_logs = false;
};

// Episode i of every cell uses seed base_seed + i, so predictor columns are
// paired on identical scenarios.
BatchSummary run_batch(const BatchSpec& spec, const SimulationConfig& config,
                       const std::function<void(const EpisodeResult&)>& progress = {});

CellSummary summarize(Regime regime, PredictorKind predictor,
                      std::span<const EpisodeResult> episodes);

std::string format_summary_table(const BatchSummary& summary);
void write_summary_csv(const BatchSummary& summary, const std::filesystem::path& path);

// trajectory.csv (every vehicle, every step) and controls.csv (one row per
// controller step) in `dir`.
void emit_plot_data(const EpisodeResult& result, const std::filesystem::path& dir);

// One JSON object per controller step (steps.jsonl).
void write_step_log(const EpisodeResult& result, const std::filesystem::path& path);

// Traffic-only world for the regime (no ego, no stopped vehicle), already
// warmed up. Used for predictor training data.
World build_traffic(const SimulationConfig& config, Regime regime, std::uint64_t seed);

// Re-scans a trajectory file for the smallest ego clearance.
double min_distance_from_trajectory(const std::filesystem::path& trajectory_csv);

}  // namespace lanemerge
