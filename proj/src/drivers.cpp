#include "lanemerge/drivers.hpp"

#include <algorithm>
#include <cmath>

namespace lanemerge {

DriverParams sample_driver(Rng& rng, const DriverParamRanges& r) {
  DriverParams p;
  p.v_ref = uniform(rng, r.v_ref.lo, r.v_ref.hi);
  p.T_headway = uniform(rng, r.T_headway.lo, r.T_headway.hi);
  p.a_max = uniform(rng, r.a_max.lo, r.a_max.hi);
  p.b_comf = uniform(rng, r.b_comf.lo, r.b_comf.hi);
  p.delta_exp = uniform(rng, r.delta_exp.lo, r.delta_exp.hi);
  p.s0 = uniform(rng, r.s0.lo, r.s0.hi);
  p.eta_c = uniform(rng, r.eta_c.lo, r.eta_c.hi);
  p.eta_p = uniform(rng, r.eta_p.lo, r.eta_p.hi);
  p.geom = r.geom;
  return p;
}

DriverParams sample_driver(std::uint64_t seed, const DriverParamRanges& ranges) {
  Rng rng(seed);
  return sample_driver(rng, ranges);
}

double idm_acceleration_raw(double self_v, double gap_s, double closing_rate_dv,
                            const DriverParams& p) {
  const double gap = std::max(gap_s, 1e-2);
  const double interaction =
      self_v * p.T_headway + self_v * closing_rate_dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
  const double s_star = p.s0 + std::max(0.0, interaction);
  const double free_term = std::pow(std::max(self_v, 0.0) / p.v_ref, p.delta_exp);
  const double ratio = s_star / gap;
  return p.a_max * (1.0 - free_term - ratio * ratio);
}

double idm_acceleration(double self_v, double gap_s, double closing_rate_dv,
                        const DriverParams& p) {
  return std::clamp(idm_acceleration_raw(self_v, gap_s, closing_rate_dv, p), -2.0 * p.b_comf,
                    p.a_max);
}

double idm_step_acceleration(double self_v, double gap_s, double closing_rate_dv,
                             const DriverParams& p, double dt, int substeps) {
  const int n = std::max(substeps, 1);
  const double h = dt / n;
  const double lead_v = self_v - closing_rate_dv;
  double v = self_v;
  double gap = gap_s;
  for (int i = 0; i < n; ++i) {
    const double next = std::max(0.0, v + h * idm_acceleration(v, gap, v - lead_v, p));
    gap -= h * (0.5 * (v + next) - lead_v);
    v = next;
  }
  return (v - self_v) / dt;
}

// ---------------------------------------------------------------------------

double idm_following(const MobilVehicle& follower, const std::optional<MobilVehicle>& leader,
                     bool clamped) {
  double gap = kFreeRoadGap;
  double dv = 0.0;
  if (leader) {
    gap = (leader->state.x - leader->params.geom.h) - (follower.state.x + follower.params.geom.h);
    dv = follower.state.v - leader->state.v;
  }
  return clamped ? idm_acceleration(follower.state.v, gap, dv, follower.params)
                 : idm_acceleration_raw(follower.state.v, gap, dv, follower.params);
}

namespace {

struct LaneOption {
  bool safe = false;
  double gain = 0.0;
};

LaneOption evaluate_lane(const MobilInputs& in, const LaneNeighbors& target,
                         const MobilParams& params) {
  LaneOption option;
  const MobilVehicle& self = in.self;

  // New follower before and after the change.
  double new_follower_gain = 0.0;
  if (target.follower) {
    const double after = idm_following(*target.follower, self, false);
    if (after < -params.b_safe) return option;
    const double before = idm_following(*target.follower, target.leader, false);
    new_follower_gain = after - before;
  }
  // The change is also rejected if the self vehicle does not physically fit.
  if (target.leader) {
    const double front_gap =
        (target.leader->state.x - target.leader->params.geom.h) - (self.state.x + self.params.geom.h);
    if (front_gap <= 0.0) return option;
  }
  if (target.follower) {
    const double rear_gap = (self.state.x - self.params.geom.h) -
                            (target.follower->state.x + target.follower->params.geom.h);
    if (rear_gap <= 0.0) return option;
  }

  double old_follower_gain = 0.0;
  if (in.current.follower) {
    const double before = idm_following(*in.current.follower, self, false);
    const double after = idm_following(*in.current.follower, in.current.leader, false);
    old_follower_gain = after - before;
  }

  const double self_before = idm_following(self, in.current.leader, false);
  const double self_after = idm_following(self, target.leader, false);

  option.safe = true;
  option.gain = (self_after - self_before) +
                params.politeness * (new_follower_gain + old_follower_gain);
  return option;
}

}  // namespace

LaneChange mobil_lane_change(const MobilInputs& in, const MobilParams& params) {
  LaneChange decision = LaneChange::kStay;
  double best_gain = params.a_threshold;
  if (in.left) {
    const LaneOption left = evaluate_lane(in, *in.left, params);
    if (left.safe && left.gain > best_gain) {
      best_gain = left.gain;
      decision = LaneChange::kLeft;
    }
  }
  if (in.right) {
    const LaneOption right = evaluate_lane(in, *in.right, params);
    if (right.safe && right.gain > best_gain) {
      decision = LaneChange::kRight;
    }
  }
  return decision;
}

// ---------------------------------------------------------------------------

YieldZone classify_intruder(const DriverView& self, const Road& road, const VehicleState& intruder,
                            const BodyGeometry& intruder_geom, const ZoneConfig& zones) {
  const int intruder_lane = road.lane_of(intruder.y);
  if (intruder_lane == self.lane) return YieldZone::kNone;

  const BodyGeometry& geom = self.params->geom;
  const CircleSet circles = circle_centers(intruder, intruder_geom);

  const double a_reach = self.state.x + geom.h + self.params->s0 + zones.a_extra;
  for (const Point2& c : circles.centers) {
    const bool ahead = c.x > self.state.x && c.x - circles.radius <= a_reach;
    const bool in_path = std::abs(c.y - self.state.y) < geom.w + circles.radius;
    if (ahead && in_path) return YieldZone::kForced;
  }

  if (std::abs(intruder_lane - self.lane) != 1) return YieldZone::kNone;
  const double dx = intruder.x - self.state.x;
  if (!(dx > 0.0 && dx <= zones.b_length)) return YieldZone::kNone;

  const double side = intruder_lane > self.lane ? 1.0 : -1.0;
  const double boundary = road.lane_center(self.lane) + side * 0.5 * road.lane_width;
  double nearest = kFreeRoadGap;
  for (const Point2& c : circles.centers) {
    const double edge = c.y - side * circles.radius;
    nearest = std::min(nearest, side * (edge - boundary));
  }
  if (nearest <= zones.b_width + self.params->eta_p) return YieldZone::kSelective;
  return YieldZone::kNone;
}

std::optional<bool> YieldMemory::lookup(int intruder_id) const {
  for (const auto& [id, yielding] : entries_) {
    if (id == intruder_id) return yielding;
  }
  return std::nullopt;
}

void YieldMemory::remember(int intruder_id, bool yielding) {
  for (auto& entry : entries_) {
    if (entry.first == intruder_id) {
      entry.second = yielding;
      return;
    }
  }
  entries_.emplace_back(intruder_id, yielding);
}

void YieldMemory::retain(const std::vector<int>& present) {
  std::erase_if(entries_, [&](const auto& entry) {
    return std::find(present.begin(), present.end(), entry.first) == present.end();
  });
}

YieldDecision yield_decision(const DriverView& self, const Road& road, int intruder_id,
                             const VehicleState& intruder, const BodyGeometry& intruder_geom,
                             const ZoneConfig& zones, YieldMemory& memory, Rng& rng) {
  const YieldZone zone = classify_intruder(self, road, intruder, intruder_geom, zones);
  switch (zone) {
    case YieldZone::kForced:
      return {zone, true};
    case YieldZone::kSelective: {
      if (auto held = memory.lookup(intruder_id)) return {zone, *held};
      const bool yielding = bernoulli(rng, self.params->eta_c);
      memory.remember(intruder_id, yielding);
      return {zone, yielding};
    }
    case YieldZone::kNone:
      break;
  }
  return {};
}

double lane_keeping_steer(const VehicleState& state, double target_y, const SteeringGains& gains) {
  const double command =
      -gains.k_lateral * (state.y - target_y) - gains.k_heading * normalize_angle(state.psi);
  return std::clamp(command, -gains.limit, gains.limit);
}

}  // namespace lanemerge
