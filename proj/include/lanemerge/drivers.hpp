#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "lanemerge/dynamics.hpp"
#include "lanemerge/geometry.hpp"
#include "lanemerge/random.hpp"
#include "lanemerge/road.hpp"

namespace lanemerge {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

// One simulated driver: IDM terms, cooperativeness and perception offset.
struct DriverParams {
  double v_ref = 3.5;      // desired speed (m/s)
  double T_headway = 1.5;  // safe time headway (s)
  double a_max = 3.0;      // maximum acceleration (m/s^2)
  double b_comf = 2.0;     // comfortable deceleration (m/s^2)
  double delta_exp = 4.0;  // acceleration exponent
  double s0 = 2.0;         // minimum gap (m)
  double eta_c = 0.5;      // cooperativeness in [0, 1]
  double eta_p = 0.0;      // perception range offset (m)
  BodyGeometry geom;

  friend bool operator==(const DriverParams&, const DriverParams&) = default;
};

// Uniform sampling ranges for the driver population.
struct DriverParamRanges {
  Range v_ref{2.0, 5.0};
  Range T_headway{1.0, 2.0};
  Range a_max{2.5, 3.5};
  Range b_comf{1.5, 2.5};
  Range delta_exp{3.5, 4.5};
  Range s0{1.0, 3.0};
  Range eta_c{0.0, 1.0};
  Range eta_p{-0.15, 0.15};
  BodyGeometry geom;

  friend bool operator==(const DriverParamRanges&, const DriverParamRanges&) = default;
};

DriverParams sample_driver(Rng& rng, const DriverParamRanges& ranges);
DriverParams sample_driver(std::uint64_t seed, const DriverParamRanges& ranges);

// Gap used by IDM when there is no leader.
inline constexpr double kFreeRoadGap = 1.0e9;

// Unclamped intelligent driver model acceleration. gap_s is the bumper gap,
// closing_rate_dv = v - v_leader.
double idm_acceleration_raw(double self_v, double gap_s, double closing_rate_dv,
                            const DriverParams& params);

// IDM acceleration clamped to [-2 b_comf, a_max].
double idm_acceleration(double self_v, double gap_s, double closing_rate_dv,
                        const DriverParams& params);

// Mean acceleration over a step of length dt, integrating IDM in `substeps`
// sub-steps with the leader's speed held. A single Euler step at dt = 0.4
// oscillates around v_ref once dt a_max delta / v_ref exceeds 2, which the
// low-v_ref end of the parameter ranges does.
double idm_step_acceleration(double self_v, double gap_s, double closing_rate_dv,
                             const DriverParams& params, double dt, int substeps);

// ---------------------------------------------------------------------------
// MOBIL

struct MobilParams {
  double politeness = 0.5;
  double a_threshold = 0.1;  // m/s^2
  double b_safe = 4.0;       // m/s^2
  friend bool operator==(const MobilParams&, const MobilParams&) = default;
};

struct MobilVehicle {
  VehicleState state;
  DriverParams params;
};

struct LaneNeighbors {
  std::optional<MobilVehicle> leader;
  std::optional<MobilVehicle> follower;
};

struct MobilInputs {
  MobilVehicle self;
  LaneNeighbors current;
  std::optional<LaneNeighbors> left;   // absent when the lane does not exist
  std::optional<LaneNeighbors> right;  // or is closed
};

enum class LaneChange { kStay, kLeft, kRight };

// Incentive and safety criteria. The safety test uses the unclamped IDM
// deceleration of the new follower.
LaneChange mobil_lane_change(const MobilInputs& in, const MobilParams& params);

// Bumper-to-bumper IDM acceleration of `follower` behind `leader` along x.
double idm_following(const MobilVehicle& follower, const std::optional<MobilVehicle>& leader,
                     bool clamped);

// ---------------------------------------------------------------------------
// Yielding

enum class YieldZone { kNone, kForced, kSelective };

struct YieldDecision {
  YieldZone zone = YieldZone::kNone;
  bool yielding = false;
  friend bool operator==(const YieldDecision&, const YieldDecision&) = default;
};

// Zone A is the driver's own path (its body strip) from its center up to
// h + s0 + a_extra ahead. Zone B is a band of the adjacent lane next to the
// lane boundary, b_width + eta_p wide, whose intruder center lies within
// (0, b_length] ahead of the driver's center.
struct ZoneConfig {
  double a_extra = 0.0;
  double b_length = 6.0;
  double b_width = 0.5;
  friend bool operator==(const ZoneConfig&, const ZoneConfig&) = default;
};

struct DriverView {
  VehicleState state;
  const DriverParams* params = nullptr;
  int lane = 0;  // lane whose boundaries define the zones
};

YieldZone classify_intruder(const DriverView& self, const Road& road, const VehicleState& intruder,
                            const BodyGeometry& intruder_geom, const ZoneConfig& zones);

// Per-driver memory of one Bernoulli draw per intruder episode.
class YieldMemory {
 public:
  std::optional<bool> lookup(int intruder_id) const;
  void remember(int intruder_id, bool yielding);
  // Drops every intruder not listed in `present`.
  void retain(const std::vector<int>& present);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::pair<int, bool>> entries_;
};

// Zone A always yields. Zone B yields with probability eta_c, drawn once per
// episode and held in `memory` until the intruder leaves.
YieldDecision yield_decision(const DriverView& self, const Road& road, int intruder_id,
                             const VehicleState& intruder, const BodyGeometry& intruder_geom,
                             const ZoneConfig& zones, YieldMemory& memory, Rng& rng);

// ---------------------------------------------------------------------------
// Lateral control of simulated drivers

struct SteeringGains {
  double k_lateral = 0.3;  // rad per meter of lateral error
  double k_heading = 1.0;  // rad per rad of heading error
  double limit = 0.3;      // rad
  friend bool operator==(const SteeringGains&, const SteeringGains&) = default;
};

// Proportional law on lateral offset and heading toward target_y.
double lane_keeping_steer(const VehicleState& state, double target_y, const SteeringGains& gains);

}  // namespace lanemerge
