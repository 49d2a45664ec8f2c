#include "lanemerge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace lanemerge {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::kCooperative:
      return "coop";
    case Regime::kMixed:
      return "mixed";
    case Regime::kAggressive:
      return "agg";
  }
  return "unknown";
}

std::optional<Regime> parse_regime(std::string_view text) {
  if (text == "coop" || text == "cooperative") return Regime::kCooperative;
  if (text == "mixed") return Regime::kMixed;
  if (text == "agg" || text == "aggressive") return Regime::kAggressive;
  return std::nullopt;
}

std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config) {
  switch (config.kind) {
    case PredictorKind::kConstantVelocity:
      return std::make_unique<ConstantVelocityPredictor>(config.t_pred);
    case PredictorKind::kGroundTruth:
      return std::make_unique<GroundTruthPredictor>(config.t_pred);
    case PredictorKind::kExternal: {
      ExternalPredictorOptions opts;
      opts.command = config.command;
      opts.t_pred = config.t_pred;
      opts.deadline = std::chrono::milliseconds(static_cast<long>(std::lround(config.deadline_ms)));
      return std::make_unique<ExternalPredictor>(opts);
    }
  }
  throw std::invalid_argument("unknown predictor kind");
}

namespace {

struct Clearance {
  double margin = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
};

Clearance ego_clearance(const World& world) {
  Clearance c;
  const Vehicle& ego = world.ego();
  const CircleSet mine = circle_centers(ego.state, ego.geom);
  for (const Vehicle& v : world.vehicles()) {
    if (v.id == ego.id) continue;
    const CircleSet theirs = circle_centers(v.state, v.geom);
    c.margin = std::min(c.margin, pair_distance(mine, theirs));
    c.gap = std::min(c.gap, euclidean_min_gap(mine, theirs));
  }
  return c;
}

bool all_pairs_clear(const World& world, double epsilon) {
  const auto vs = world.vehicles();
  std::vector<CircleSet> circles;
  circles.reserve(vs.size());
  for (const Vehicle& v : vs) circles.push_back(circle_centers(v.state, v.geom));
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (std::abs(vs[i].state.x - vs[j].state.x) > 10.0) continue;
      if (!(pair_distance(circles[i], circles[j]) > epsilon)) return false;
    }
  }
  return true;
}

}  // namespace

Scenario build_scenario(const SimulationConfig& config, Regime regime, std::uint64_t seed) {
  const ScenarioConfig& sc = config.scenario;
  const Road road{sc.lane_count, sc.lane_width};
  if (!road.has_lane(sc.ego_lane) || !road.has_lane(sc.target_lane)) {
    throw std::invalid_argument("scenario lanes outside the road");
  }
  const double x_end = config.controller.x_end;
  BodyGeometry geom = config.traffic.ranges.geom;

  for (int attempt = 0; attempt < sc.placement_retries; ++attempt) {
    World world(road, config.traffic, regime, derive_seed(seed, Stream::kDrivers, attempt));
    const int stopped = world.add_vehicle(
        VehicleKind::kStatic, {x_end + sc.stopped_offset, road.lane_center(sc.ego_lane), 0.0, 0.0},
        geom);
    world.refill();
    const int warm_steps = static_cast<int>(std::lround(sc.warmup / config.traffic.dt));
    for (int k = 0; k < warm_steps; ++k) world.step_without_ego();

    Rng rng = make_rng(seed, Stream::kScenario, attempt);
    VehicleState ego;
    ego.x = uniform(rng, sc.ego_x.lo, sc.ego_x.hi);
    ego.y = road.lane_center(sc.ego_lane);
    ego.v = uniform(rng, sc.ego_v.lo, sc.ego_v.hi);
    const int ego_id = world.add_vehicle(VehicleKind::kEgo, ego, geom);
    if (!all_pairs_clear(world, config.controller.epsilon)) continue;

    Scenario s{std::move(world), regime, seed, ego_id, stopped, road.lane_center(sc.target_lane),
               sc.time_limit};
    return s;
  }
  throw std::runtime_error("no collision-free placement for seed " + std::to_string(seed));
}

EpisodeResult run_episode(const Scenario& scenario, const SimulationConfig& config,
                          const EpisodeOptions& options) {
  World world = scenario.world;
  ControllerConfig cc = config.controller;
  const Road& road = world.road();
  const double half_width = world.ego().geom.w;
  cc.y_min = std::max(cc.y_min, road.lane_center(0) - 0.5 * road.lane_width + half_width);
  cc.y_max = std::min(cc.y_max, road.lane_center(road.lane_count - 1) + 0.5 * road.lane_width -
                                    half_width);
  auto predictor = make_predictor(config.predictor);
  TrafficHistory history(static_cast<std::size_t>(config.predictor.t_obs) + 1);

  EpisodeResult result;
  result.seed = scenario.seed;
  result.regime = scenario.regime;
  result.predictor = std::string(predictor->name());

  auto record = [&](int step) {
    if (!options.record_trajectory) return;
    for (const Vehicle& v : world.vehicles()) {
      result.trajectory.push_back({step, world.time(), v.id, v.kind, v.state, v.geom});
    }
  };

  Clearance clear = ego_clearance(world);
  result.min_distance = clear.gap;
  record(0);
  if (clear.gap <= 0.0) {
    result.collision = true;
    return result;
  }

  const double t0 = world.time();
  std::vector<ControlInput> plan;
  int streak = 0;
  double streak_start = 0.0;
  for (int k = 0;; ++k) {
    const VehicleState& ego = world.ego().state;
    const double t = world.time() - t0;
    const bool captured = std::abs(ego.y - scenario.target_y) < cc.capture_y &&
                          std::abs(normalize_angle(ego.psi)) < cc.capture_psi;
    if (captured) {
      if (streak == 0) streak_start = t;
      if (++streak >= config.scenario.capture_steps) {
        result.success = true;
        result.time_to_merge = streak_start;
        break;
      }
    } else {
      streak = 0;
    }
    if (t >= scenario.time_limit - 1e-9) {
      result.timed_out = true;
      break;
    }

    history.push(world);
    const ObservationWindow window = history.window(config.predictor.t_obs, scenario.ego_id);
    Rng rng = make_rng(scenario.seed, Stream::kController, static_cast<std::uint64_t>(k));
    SolveOptions solve_options = options.solve;
    solve_options.previous_plan = plan;
    const SolveResult solved =
        solve_step(world, window, *predictor, cc, scenario.target_y, rng, solve_options);
    if (solved.selected >= 0) {
      plan = solved.candidates[solved.selected].controls;
    } else {
      plan.clear();
    }
    if (options.on_step) options.on_step(world, solved);
    world.step(solved.input);
    ++result.steps;
    record(result.steps);

    clear = ego_clearance(world);
    result.min_distance = std::min(result.min_distance, clear.gap);
    StepLog entry;
    entry.t = t;
    entry.ego = world.ego().state;
    entry.input = solved.input;
    entry.mode = solved.mode;
    entry.cost = solved.selected >= 0 ? solved.candidates[solved.selected].cost
                                      : std::numeric_limits<double>::infinity();
    entry.feasible = solved.feasible_count;
    entry.margin = clear.margin;
    entry.min_gap = clear.gap;
    entry.latency_s = solved.latency_s;
    result.log.push_back(entry);

    if (clear.gap <= 0.0) {
      result.collision = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

const CellSummary* BatchSummary::cell(Regime regime, PredictorKind predictor) const {
  for (const CellSummary& c : cells) {
    if (c.regime == regime && c.predictor == predictor) return &c;
  }
  return nullptr;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / xs.size();
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (xs.size() - 1))};
}

}  // namespace

CellSummary summarize(Regime regime, PredictorKind predictor,
                      std::span<const EpisodeResult> episodes) {
  CellSummary c;
  c.regime = regime;
  c.predictor = predictor;
  c.episodes = static_cast<int>(episodes.size());
  std::vector<double> ttm;
  std::vector<double> md;
  for (const EpisodeResult& e : episodes) {
    if (e.success) {
      ++c.successes;
      ttm.push_back(*e.time_to_merge);
    }
    if (e.collision) ++c.collisions;
    md.push_back(e.min_distance);
  }
  c.success_rate = c.episodes > 0 ? 100.0 * c.successes / c.episodes : 0.0;
  std::tie(c.time_to_merge_mean, c.time_to_merge_std) = mean_std(ttm);
  std::tie(c.min_distance_mean, c.min_distance_std) = mean_std(md);
  return c;
}

BatchSummary run_batch(const BatchSpec& spec, const SimulationConfig& config,
                       const std::function<void(const EpisodeResult&)>& progress) {
  if (spec.episodes < 1) throw std::invalid_argument("run_batch: episodes must be >= 1");
  struct Job {
    Regime regime;
    PredictorKind predictor;
    int index;
  };
  std::vector<Job> jobs;
  for (Regime r : spec.regimes) {
    for (PredictorKind p : spec.predictors) {
      for (int i = 0; i < spec.episodes; ++i) jobs.push_back({r, p, i});
    }
  }

  BatchSummary summary;
  summary.episodes.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    try {
      for (std::size_t j = next++; j < jobs.size(); j = next++) {
        const Job& job = jobs[j];
        SimulationConfig cfg = config;
        cfg.predictor.kind = job.predictor;
        const Scenario scenario =
            build_scenario(cfg, job.regime, spec.base_seed + static_cast<std::uint64_t>(job.index));
        EpisodeResult r = run_episode(scenario, cfg);
        if (!spec.keep_logs) r.log.clear();
        summary.episodes[j] = std::move(r);
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(summary.episodes[j]);
        }
      }
    } catch (...) {
      std::lock_guard lock(progress_mutex);
      if (!failure) failure = std::current_exception();
      next = jobs.size();
    }
  };
  const int width = std::max(1, std::min<int>(spec.workers, static_cast<int>(jobs.size())));
  if (width == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::size_t offset = 0;
  for (Regime r : spec.regimes) {
    for (PredictorKind p : spec.predictors) {
      summary.cells.push_back(summarize(
          r, p, std::span(summary.episodes).subspan(offset, static_cast<std::size_t>(spec.episodes))));
      offset += static_cast<std::size_t>(spec.episodes);
    }
  }
  return summary;
}

std::string format_summary_table(const BatchSummary& summary) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-7s %-9s %8s %9s %18s %18s %10s\n", "regime", "predictor",
                "episodes", "success%", "time_to_merge[s]", "min_distance[m]", "collisions");
  out << line;
  for (const CellSummary& c : summary.cells) {
    std::snprintf(line, sizeof(line), "%-7s %-9s %8d %9.1f %8.2f +- %6.2f %8.3f +- %6.3f %10d\n",
                  std::string(to_string(c.regime)).c_str(),
                  std::string(to_string(c.predictor)).c_str(), c.episodes, c.success_rate,
                  c.time_to_merge_mean, c.time_to_merge_std, c.min_distance_mean,
                  c.min_distance_std, c.collisions);
    out << line;
  }
  return out.str();
}

void write_summary_csv(const BatchSummary& summary, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "regime,predictor,episodes,successes,success_rate,time_to_merge_mean,time_to_merge_std,"
         "min_distance_mean,min_distance_std,collisions\n";
  out.precision(17);
  for (const CellSummary& c : summary.cells) {
    out << to_string(c.regime) << ',' << to_string(c.predictor) << ',' << c.episodes << ','
        << c.successes << ',' << c.success_rate << ',' << c.time_to_merge_mean << ','
        << c.time_to_merge_std << ',' << c.min_distance_mean << ',' << c.min_distance_std << ','
        << c.collisions << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string_view kind_name(VehicleKind k) {
  switch (k) {
    case VehicleKind::kEgo:
      return "ego";
    case VehicleKind::kDriver:
      return "driver";
    case VehicleKind::kStatic:
      return "static";
  }
  return "unknown";
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{}) throw std::runtime_error("bad number in trajectory file");
  return v;
}

}  // namespace

void emit_plot_data(const EpisodeResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "trajectory.csv");
    if (!out) throw std::runtime_error("cannot write trajectory.csv in " + dir.string());
    out << "step,t,vehicle_id,kind,x,y,psi,v,w,h\n";
    for (const TrajectoryRow& r : result.trajectory) {
      out << r.step << ',' << num(r.t) << ',' << r.id << ',' << kind_name(r.kind) << ','
          << num(r.state.x) << ',' << num(r.state.y) << ',' << num(r.state.psi) << ','
          << num(r.state.v) << ',' << num(r.geom.w) << ',' << num(r.geom.h) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for trajectory.csv");
  }
  std::ofstream out(dir / "controls.csv");
  if (!out) throw std::runtime_error("cannot write controls.csv in " + dir.string());
  out << "step,t,a,delta,mode,cost,feasible,margin,min_gap,latency_s\n";
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    const StepLog& s = result.log[i];
    out << i << ',' << num(s.t) << ',' << num(s.input.a) << ',' << num(s.input.delta) << ','
        << to_string(s.mode) << ',' << num(s.cost) << ',' << s.feasible << ',' << num(s.margin)
        << ',' << num(s.min_gap) << ',' << num(s.latency_s) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for controls.csv");
}

void write_step_log(const EpisodeResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    const StepLog& s = result.log[i];
    nlohmann::json row = {{"step", i},
                          {"t", s.t},
                          {"x", s.ego.x},
                          {"y", s.ego.y},
                          {"psi", s.ego.psi},
                          {"v", s.ego.v},
                          {"a", s.input.a},
                          {"delta", s.input.delta},
                          {"mode", to_string(s.mode)},
                          {"feasible", s.feasible},
                          {"margin", s.margin},
                          {"min_gap", s.min_gap},
                          {"latency_s", s.latency_s}};
    // JSON has no infinity; the fallback step carries a null cost.
    row["cost"] = std::isfinite(s.cost) ? nlohmann::json(s.cost) : nlohmann::json();
    out << row.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

World build_traffic(const SimulationConfig& config, Regime regime, std::uint64_t seed) {
  const ScenarioConfig& sc = config.scenario;
  World world(Road{sc.lane_count, sc.lane_width}, config.traffic, regime,
              derive_seed(seed, Stream::kDrivers));
  world.refill();
  const int warm_steps = static_cast<int>(std::lround(sc.warmup / config.traffic.dt));
  for (int k = 0; k < warm_steps; ++k) world.step_without_ego();
  return world;
}

double min_distance_from_trajectory(const std::filesystem::path& trajectory_csv) {
  std::ifstream in(trajectory_csv);
  if (!in) throw std::runtime_error("cannot open " + trajectory_csv.string());
  struct Row {
    bool ego;
    VehicleState s;
    BodyGeometry g;
  };
  std::map<int, std::vector<Row>> steps;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 10) throw std::runtime_error("trajectory row needs 10 columns");
    Row r;
    r.ego = f[3] == "ego";
    r.s = {parse_double(f[4]), parse_double(f[5]), parse_double(f[6]), parse_double(f[7])};
    r.g.w = parse_double(f[8]);
    r.g.h = parse_double(f[9]);
    steps[static_cast<int>(parse_double(f[0]))].push_back(r);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [step, rows] : steps) {
    const Row* ego = nullptr;
    for (const Row& r : rows) {
      if (r.ego) ego = &r;
    }
    if (ego == nullptr) continue;
    for (const Row& r : rows) {
      if (&r == ego) continue;
      best = std::min(best, euclidean_min_gap(ego->s, ego->g, r.s, r.g));
    }
  }
  return best;
}

}  // namespace lanemerge
