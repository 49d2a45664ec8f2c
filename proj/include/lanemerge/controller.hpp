#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lanemerge/dynamics.hpp"
#include "lanemerge/predictors.hpp"
#include "lanemerge/random.hpp"
#include "lanemerge/world.hpp"

namespace lanemerge {

enum class ManeuverMode { kKeep, kChangeLeft, kChangeRight };

std::string_view to_string(ManeuverMode mode);

// What solve_step returns when no candidate is feasible.
enum class FallbackPolicy {
  kBrake,          // (a_min, 0)
  kLongestPrefix,  // first input of the sequence that stays feasible longest;
                   // the straight braking sequence competes and wins ties
};

// How a candidate sequence is drawn from the mode's box.
enum class CandidateSampling {
  kIid,        // every step drawn independently
  kHoldFirst,  // one draw held over the whole horizon
};

struct ControllerConfig {
  double T = 2.8;  // receding horizon (s)
  int N_sim = 32;
  double dt = 0.4;
  double lambda_div = 12000.0;
  double lambda_v = 1000.0;
  double lambda_delta = 500.0;
  double lambda_a = 500.0;
  double lambda_Delta_delta = 100.0;
  double lambda_Delta_a = 100.0;
  double delta_min = -0.3;
  double delta_max = 0.3;
  double a_min = -4.0;
  double a_max = 3.5;
  double x_end = 50.0;
  double v_ref = 10.0;

  double epsilon = 0.1;  // lower bound on pair_distance
  double alpha = 0.1;    // lane-keep steering shrink
  double capture_y = 0.2;
  double capture_psi = 0.05;
  double min_div_distance = 0.1;  // clamp on x_end - x in the divergence weight
  CandidateSampling sampling = CandidateSampling::kIid;
  // Mode selection: keep only when the keep box (alpha times the steering
  // limit) can straighten the ego out inside the capture band. Otherwise the
  // direction comes from where the ego would end up straightening out at full
  // steering, y + sgn(psi) R (1 - cos psi), with that offset scaled by this
  // factor; 0 compares the current offset only. Sampled steering averages
  // half the limit, hence a factor well above 1.
  double mode_preview = 2.5;
  // Require the last horizon state to be able to stop before x_end at a_min.
  bool terminal_braking = false;
  // Re-evaluate the previous step's chosen sequence, shifted by one step, as
  // an extra candidate after the N_sim samples, clamped to the current mode box.
  bool warm_start = true;
  // When no candidate in the selected mode's box is feasible, sample the
  // other two boxes before falling back.
  bool mode_escape = true;
  FallbackPolicy fallback = FallbackPolicy::kLongestPrefix;
  int workers = 1;
  // Lateral limits on the ego center (road edges less the half width). Set by
  // the harness from the lane geometry.
  double y_min = -std::numeric_limits<double>::infinity();
  double y_max = std::numeric_limits<double>::infinity();

  int horizon_steps() const;
  // Empty when valid; one message per violated invariant otherwise.
  std::vector<std::string> validate() const;

  friend bool operator==(const ControllerConfig&, const ControllerConfig&) = default;
};

struct CostBreakdown {
  double divergence = 0.0;
  double speed = 0.0;
  double steering = 0.0;
  double accel = 0.0;
  double steering_rate = 0.0;
  double jerk = 0.0;

  double total() const { return divergence + speed + steering + accel + steering_rate + jerk; }
};

struct RolloutCandidate {
  std::vector<ControlInput> controls;
  std::vector<VehicleState> states;  // horizon + 1, states[0] is the current state
  double cost = std::numeric_limits<double>::infinity();
  CostBreakdown breakdown;
  bool feasible = false;
  std::optional<int> infeasible_at;  // horizon step of the first violation
  double min_margin = std::numeric_limits<double>::infinity();
  ManeuverMode mode = ManeuverMode::kKeep;  // box the sequence was drawn from
};

double lane_divergence_weight(double x, double x_end, double scale, double min_distance = 0.1);

// Throws std::invalid_argument unless states.size() == controls.size() + 1.
CostBreakdown stage_costs(std::span<const VehicleState> states,
                          std::span<const ControlInput> controls, const ControllerConfig& config,
                          double target_y);

struct ActionBox {
  double a_lo, a_hi, delta_lo, delta_hi;
};

ActionBox action_box(ManeuverMode mode, const ControllerConfig& config);

std::vector<std::vector<ControlInput>> sample_candidates(ManeuverMode mode,
                                                         const ControllerConfig& config, Rng& rng);

ManeuverMode select_mode(const VehicleState& ego, double target_y, const ControllerConfig& config,
                         const BodyGeometry& geom = {});

// Everything a rollout needs besides the control sequence. Other vehicles are
// the non-ego rows of the observation window.
struct PlanningContext {
  VehicleState ego;
  BodyGeometry ego_geom;
  double target_y = 0.0;
  ObservationWindow window;
  std::vector<double> headings;      // current heading per window row
  std::vector<BodyGeometry> geoms;   // nominal geometry per window row
};

PlanningContext make_context(const World& world, ObservationWindow window, double target_y);

RolloutCandidate evaluate_candidate(std::span<const ControlInput> controls,
                                    const PlanningContext& context, Predictor& predictor,
                                    const ControllerConfig& config);

struct SolveOptions {
  // Test mode: replaces candidate 0 with the all-zero sequence.
  bool inject_zero = false;
  // Previously selected sequence; used when config.warm_start is set.
  std::span<const ControlInput> previous_plan;
};

// previous_plan advanced by one step with its last input repeated.
std::vector<ControlInput> shift_plan(std::span<const ControlInput> previous_plan, int steps);

struct SolveResult {
  ControlInput input;
  ManeuverMode mode = ManeuverMode::kKeep;  // box of the emitted input when one was selected
  std::vector<RolloutCandidate> candidates;
  int selected = -1;  // -1 when the fallback was used
  // Fallback only: feasible prefix length of the sequence that was followed.
  int fallback_prefix = 0;
  int feasible_count = 0;
  double latency_s = 0.0;
};

// Index of the lowest-cost feasible candidate, lowest index on ties, or -1.
int select_candidate(std::span<const RolloutCandidate> candidates);

// One receding-horizon step. Calls predictor.observe(world) first.
SolveResult solve_step(const World& world, const ObservationWindow& window, Predictor& predictor,
                       const ControllerConfig& config, double target_y, Rng& rng,
                       const SolveOptions& options = {});

}  // namespace lanemerge
