#include "lanemerge/controller.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace lanemerge {

std::string_view to_string(ManeuverMode mode) {
  switch (mode) {
    case ManeuverMode::kKeep:
      return "keep";
    case ManeuverMode::kChangeLeft:
      return "left";
    case ManeuverMode::kChangeRight:
      return "right";
  }
  return "unknown";
}

int ControllerConfig::horizon_steps() const {
  return static_cast<int>(std::lround(T / dt));
}

std::vector<std::string> ControllerConfig::validate() const {
  std::vector<std::string> errors;
  auto non_negative = [&](double v, const char* name) {
    if (!(v >= 0.0)) errors.push_back(std::string(name) + " must be >= 0");
  };
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0)) errors.push_back(std::string(name) + " must be > 0");
  };
  positive(T, "T");
  positive(dt, "dt");
  if (T > 0 && dt > 0 && horizon_steps() < 1) errors.push_back("T / dt must be at least one step");
  if (N_sim < 1) errors.push_back("N_sim must be >= 1");
  non_negative(lambda_div, "lambda_div");
  non_negative(lambda_v, "lambda_v");
  non_negative(lambda_delta, "lambda_delta");
  non_negative(lambda_a, "lambda_a");
  non_negative(lambda_Delta_delta, "lambda_Delta_delta");
  non_negative(lambda_Delta_a, "lambda_Delta_a");
  if (!(delta_min <= delta_max)) errors.push_back("delta_min must be <= delta_max");
  if (!(delta_min <= 0.0 && delta_max >= 0.0)) {
    errors.push_back("delta_min <= 0 <= delta_max is required by the lane-change boxes");
  }
  if (!(a_min <= a_max)) errors.push_back("a_min must be <= a_max");
  if (!(alpha >= 0.0 && alpha <= 1.0)) errors.push_back("alpha must lie in [0, 1]");
  non_negative(v_ref, "v_ref");
  if (!std::isfinite(x_end)) errors.push_back("x_end must be finite");
  non_negative(epsilon, "epsilon");
  non_negative(mode_preview, "mode_preview");
  positive(capture_y, "capture_y");
  positive(capture_psi, "capture_psi");
  positive(min_div_distance, "min_div_distance");
  if (workers < 1) errors.push_back("workers must be >= 1");
  if (!(y_min < y_max)) errors.push_back("y_min must be < y_max");
  return errors;
}

double lane_divergence_weight(double x, double x_end, double scale, double min_distance) {
  return scale / std::max(x_end - x, min_distance);
}

CostBreakdown stage_costs(std::span<const VehicleState> states,
                          std::span<const ControlInput> controls, const ControllerConfig& config,
                          double target_y) {
  if (states.size() != controls.size() + 1) {
    throw std::invalid_argument("stage_costs: need exactly one more state than controls");
  }
  CostBreakdown c;
  for (const VehicleState& s : states) {
    const double w = lane_divergence_weight(s.x, config.x_end, config.lambda_div,
                                            config.min_div_distance);
    c.divergence += w * std::abs(s.y - target_y);
    const double dv = s.v - config.v_ref;
    c.speed += config.lambda_v * dv * dv;
  }
  for (std::size_t i = 0; i < controls.size(); ++i) {
    const ControlInput& u = controls[i];
    c.steering += config.lambda_delta * u.delta * u.delta;
    c.accel += config.lambda_a * u.a * u.a;
    if (i > 0) {
      const double dd = u.delta - controls[i - 1].delta;
      const double da = u.a - controls[i - 1].a;
      c.steering_rate += config.lambda_Delta_delta * dd * dd;
      c.jerk += config.lambda_Delta_a * da * da;
    }
  }
  return c;
}

ActionBox action_box(ManeuverMode mode, const ControllerConfig& config) {
  switch (mode) {
    case ManeuverMode::kKeep:
      return {config.a_min, config.a_max, config.alpha * config.delta_min,
              config.alpha * config.delta_max};
    case ManeuverMode::kChangeLeft:
      return {config.a_min, config.a_max, 0.0, config.delta_max};
    case ManeuverMode::kChangeRight:
      return {config.a_min, config.a_max, config.delta_min, 0.0};
  }
  throw std::invalid_argument("unknown maneuver mode");
}

std::vector<std::vector<ControlInput>> sample_candidates(ManeuverMode mode,
                                                         const ControllerConfig& config, Rng& rng) {
  const ActionBox box = action_box(mode, config);
  const int steps = config.horizon_steps();
  std::vector<std::vector<ControlInput>> out(config.N_sim);
  for (auto& seq : out) {
    seq.resize(steps);
    for (int k = 0; k < steps; ++k) {
      if (k > 0 && config.sampling == CandidateSampling::kHoldFirst) {
        seq[k] = seq[0];
        continue;
      }
      seq[k].a = uniform(rng, box.a_lo, box.a_hi);
      seq[k].delta = uniform(rng, box.delta_lo, box.delta_hi);
    }
  }
  return out;
}

ManeuverMode select_mode(const VehicleState& ego, double target_y, const ControllerConfig& config,
                         const BodyGeometry& geom) {
  const double psi = normalize_angle(ego.psi);
  const double limit = std::min(std::abs(config.delta_min), config.delta_max);
  // Lateral position after straightening out at steering `delta`.
  auto landing = [&](double delta, double scale) {
    if (psi == 0.0) return ego.y;
    const double beta = slip_angle(geom, delta);
    if (beta <= 0.0) return std::copysign(std::numeric_limits<double>::infinity(), psi);
    const double radius = geom.l_r / std::sin(beta);
    return ego.y + scale * std::copysign(radius * (1.0 - std::cos(psi)), psi);
  };
  const double keep_offset = target_y - landing(config.alpha * limit, 1.0);
  if (std::abs(keep_offset) <= config.capture_y) return ManeuverMode::kKeep;
  double offset = target_y - landing(limit, config.mode_preview);
  if (std::abs(offset) <= config.capture_y) offset = keep_offset;
  return offset > 0.0 ? ManeuverMode::kChangeLeft : ManeuverMode::kChangeRight;
}

PlanningContext make_context(const World& world, ObservationWindow window, double target_y) {
  PlanningContext ctx;
  const Vehicle& ego = world.ego();
  ctx.ego = ego.state;
  ctx.ego_geom = ego.geom;
  ctx.target_y = target_y;
  ctx.headings.resize(window.ids.size(), 0.0);
  ctx.geoms.resize(window.ids.size());
  for (std::size_t i = 0; i < window.ids.size(); ++i) {
    if (const Vehicle* v = world.find(window.ids[i])) {
      ctx.headings[i] = v->state.psi;
      ctx.geoms[i] = v->geom;
    }
  }
  if (window.ego_index < 0) {
    for (std::size_t i = 0; i < window.ids.size(); ++i) {
      if (window.ids[i] == ego.id) window.ego_index = static_cast<int>(i);
    }
  }
  ctx.window = std::move(window);
  return ctx;
}

RolloutCandidate evaluate_candidate(std::span<const ControlInput> controls,
                                    const PlanningContext& ctx, Predictor& predictor,
                                    const ControllerConfig& config) {
  const int steps = static_cast<int>(controls.size());
  RolloutCandidate cand;
  cand.controls.assign(controls.begin(), controls.end());
  cand.states.reserve(steps + 1);
  cand.states.push_back(ctx.ego);
  for (int k = 0; k < steps; ++k) {
    cand.states.push_back(step(cand.states.back(), controls[k], ctx.ego_geom, config.dt));
  }

  PredictionSheet sheet;
  try {
    sheet = predictor.predict_horizon(ctx.window, std::span(cand.states).subspan(1), steps);
  } catch (const DeadlineExceeded&) {
    cand.infeasible_at = 0;
    return cand;
  }

  const BodyGeometry& eg = ctx.ego_geom;
  const std::size_t n = ctx.window.ids.size();
  std::vector<double> psi = ctx.headings;
  std::vector<Point2> prev(n);
  for (std::size_t i = 0; i < n; ++i) prev[i] = ctx.window.tracks[i].back();

  for (int k = 1; k <= steps; ++k) {
    const VehicleState& me = cand.states[k];
    bool ok = me.x <= config.x_end && me.y >= config.y_min && me.y <= config.y_max;
    if (ok && config.terminal_braking && k == steps) {
      ok = me.x + me.v * me.v / (2.0 * std::abs(config.a_min)) <= config.x_end;
    }
    const CircleSet mine = circle_centers(me, eg);
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 p = sheet.tracks[i][k - 1];
      const double dx = p.x - prev[i].x;
      const double dy = p.y - prev[i].y;
      if (std::hypot(dx, dy) >= 1e-3) psi[i] = std::atan2(dy, dx);
      prev[i] = p;
      if (!ok || static_cast<int>(i) == ctx.window.ego_index) continue;
      const BodyGeometry& og = ctx.geoms[i];
      // Circle centers are at most (h - w) from the body center, so anything
      // farther than this along x cannot bind the constraint.
      const double reach = (eg.h - eg.w) + (og.h - og.w) +
                           std::sqrt((eg.w + og.w) * (eg.w + og.w) + config.epsilon);
      if (std::abs(p.x - me.x) > reach || std::abs(p.y - me.y) > reach) continue;
      const double margin =
          pair_distance(mine, circle_centers({p.x, p.y, psi[i], 0.0}, og));
      cand.min_margin = std::min(cand.min_margin, margin);
      if (margin < config.epsilon) ok = false;
    }
    if (!ok) {
      cand.infeasible_at = k;
      return cand;
    }
  }

  cand.breakdown = stage_costs(cand.states, cand.controls, config, ctx.target_y);
  cand.cost = cand.breakdown.total();
  cand.feasible = std::isfinite(cand.cost);
  if (!cand.feasible) cand.cost = std::numeric_limits<double>::infinity();
  return cand;
}

std::vector<ControlInput> shift_plan(std::span<const ControlInput> previous_plan, int steps) {
  std::vector<ControlInput> out;
  if (previous_plan.size() < 2) return out;
  out.assign(previous_plan.begin() + 1, previous_plan.end());
  out.resize(static_cast<std::size_t>(steps), out.back());
  return out;
}

int select_candidate(std::span<const RolloutCandidate> candidates) {
  int best = -1;
  for (int j = 0; j < static_cast<int>(candidates.size()); ++j) {
    if (!candidates[j].feasible) continue;
    if (best < 0 || candidates[j].cost < candidates[best].cost) best = j;
  }
  return best;
}

SolveResult solve_step(const World& world, const ObservationWindow& window, Predictor& predictor,
                       const ControllerConfig& config, double target_y, Rng& rng,
                       const SolveOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SolveResult result;
  predictor.observe(world);
  const PlanningContext ctx = make_context(world, window, target_y);
  result.mode = select_mode(ctx.ego, target_y, config, ctx.ego_geom);

  auto sample = [&](ManeuverMode mode) {
    auto out = sample_candidates(mode, config, rng);
    if (config.warm_start) {
      auto shifted = shift_plan(options.previous_plan, config.horizon_steps());
      const ActionBox box = action_box(mode, config);
      for (ControlInput& u : shifted) {
        u.a = std::clamp(u.a, box.a_lo, box.a_hi);
        u.delta = std::clamp(u.delta, box.delta_lo, box.delta_hi);
      }
      if (!shifted.empty()) out.push_back(std::move(shifted));
    }
    return out;
  };

  std::vector<std::vector<ControlInput>> sequences;
  std::vector<ManeuverMode> modes;
  // Evaluates sequences[from..] into result.candidates.
  auto evaluate = [&](std::size_t from) {
    result.candidates.resize(sequences.size());
    const std::size_t count = sequences.size() - from;
    const int workers = std::min<int>(config.workers, static_cast<int>(count));
    if (workers <= 1) {
      for (std::size_t j = from; j < sequences.size(); ++j) {
        result.candidates[j] = evaluate_candidate(sequences[j], ctx, predictor, config);
      }
      return;
    }
    std::atomic<std::size_t> next{from};
    std::vector<std::unique_ptr<Predictor>> clones;
    for (int w = 0; w < workers; ++w) clones.push_back(predictor.clone());
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t j = next++; j < sequences.size(); j = next++) {
            result.candidates[j] = evaluate_candidate(sequences[j], ctx, *clones[w], config);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  };
  auto add = [&](ManeuverMode mode, std::vector<std::vector<ControlInput>> more) {
    for (auto& seq : more) {
      sequences.push_back(std::move(seq));
      modes.push_back(mode);
    }
  };

  add(result.mode, sample(result.mode));
  if (options.inject_zero && !sequences.empty()) {
    std::fill(sequences[0].begin(), sequences[0].end(), ControlInput{});
  }
  evaluate(0);

  const auto any_feasible = [&] {
    return std::any_of(result.candidates.begin(), result.candidates.end(),
                       [](const RolloutCandidate& c) { return c.feasible; });
  };
  if (config.mode_escape && !any_feasible()) {
    // Nothing works in the selected box, e.g. right after the mode flipped
    // away from the only safe direction: try the other two boxes.
    const std::size_t from = sequences.size();
    for (ManeuverMode m :
         {ManeuverMode::kKeep, ManeuverMode::kChangeLeft, ManeuverMode::kChangeRight}) {
      if (m != result.mode) add(m, sample(m));
    }
    evaluate(from);
  }
  for (std::size_t j = 0; j < modes.size(); ++j) result.candidates[j].mode = modes[j];

  result.selected = select_candidate(result.candidates);
  result.feasible_count = static_cast<int>(
      std::count_if(result.candidates.begin(), result.candidates.end(),
                    [](const RolloutCandidate& c) { return c.feasible; }));
  if (result.selected >= 0) {
    result.input = result.candidates[result.selected].controls.front();
    result.mode = result.candidates[result.selected].mode;
  } else {
    result.input = {config.a_min, 0.0};
    if (config.fallback == FallbackPolicy::kLongestPrefix) {
      auto prefix = [](const RolloutCandidate& c) { return c.infeasible_at.value_or(0) - 1; };
      const std::vector<ControlInput> brake(config.horizon_steps(), {config.a_min, 0.0});
      int best = prefix(evaluate_candidate(brake, ctx, predictor, config));
      result.fallback_prefix = std::max(best, 0);
      for (const RolloutCandidate& c : result.candidates) {
        if (prefix(c) > best) {
          best = prefix(c);
          result.fallback_prefix = best;
          result.input = c.controls.front();
          result.mode = c.mode;
        }
      }
    }
  }
  result.latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace lanemerge
