#include "lanemerge/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lanemerge {

World::World(Road road, TrafficConfig config, Regime regime, std::uint64_t spawn_seed)
    : road_(road), config_(std::move(config)), regime_(regime), spawn_seed_(spawn_seed) {}

int World::add_vehicle(VehicleKind kind, const VehicleState& state, const BodyGeometry& geom) {
  if (kind == VehicleKind::kDriver) {
    throw std::invalid_argument("add_vehicle: use add_driver for simulated drivers");
  }
  Vehicle v;
  v.id = next_id_++;
  v.kind = kind;
  v.state = state;
  v.geom = geom;
  vehicles_.push_back(v);
  return v.id;
}

int World::add_driver(const VehicleState& state, const DriverParams& params, std::uint64_t seed) {
  Vehicle v;
  v.id = next_id_++;
  v.kind = VehicleKind::kDriver;
  v.state = state;
  v.geom = params.geom;
  v.agent = static_cast<int>(agents_.size());

  DriverAgent agent;
  agent.vehicle_id = v.id;
  agent.params = params;
  agent.target_lane = road_.lane_of(state.y);
  agent.seed = seed;
  agent.phase = 2.0 * std::numbers::pi * hashed_unit(seed, Stream::kNoise, ~0ULL);

  vehicles_.push_back(v);
  agents_.push_back(std::move(agent));
  return v.id;
}

DriverParams World::sample_driver_for_spawn(std::uint64_t counter) const {
  Rng rng = make_rng(spawn_seed_, Stream::kSpawn, counter);
  DriverParams p = sample_driver(rng, config_.ranges);
  switch (regime_) {
    case Regime::kCooperative:
      p.eta_c = 1.0;
      break;
    case Regime::kAggressive:
      p.eta_c = 0.0;
      break;
    case Regime::kMixed:
      break;
  }
  return p;
}

void World::refill() {
  for (int lane : config_.inflow_lanes) {
    if (!road_.has_lane(lane)) continue;
    for (;;) {
      const Vehicle* rear = nullptr;
      for (const Vehicle& v : vehicles_) {
        if (road_.lane_of(v.state.y) != lane) continue;
        if (rear == nullptr || v.state.x < rear->state.x) rear = &v;
      }
      const DriverParams params = sample_driver_for_spawn(spawn_counter_);
      VehicleState state;
      state.y = road_.lane_center(lane);
      if (rear == nullptr) {
        state.x = config_.head_x;
        state.v = params.v_ref;
      } else {
        state.x = rear->state.x - rear->geom.h - params.s0 - params.geom.h;
        state.v = rear->state.v;
        if (state.x < config_.spawn_x) break;
      }
      add_driver(state, params, derive_seed(spawn_seed_, Stream::kDrivers, spawn_counter_));
      ++spawn_counter_;
    }
  }
}

const Vehicle* World::find(int id) const {
  for (const Vehicle& v : vehicles_) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

std::optional<int> World::ego_id() const {
  for (const Vehicle& v : vehicles_) {
    if (v.kind == VehicleKind::kEgo) return v.id;
  }
  return std::nullopt;
}

const Vehicle& World::ego() const {
  for (const Vehicle& v : vehicles_) {
    if (v.kind == VehicleKind::kEgo) return v;
  }
  throw std::logic_error("world has no ego vehicle");
}

std::size_t World::index_of(int id) const {
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    if (vehicles_[i].id == id) return i;
  }
  throw std::out_of_range("unknown vehicle id");
}

ControlInput World::driver_step(std::size_t agent_index) {
  std::vector<CircleSet> circles;
  circles.reserve(vehicles_.size());
  for (const Vehicle& v : vehicles_) circles.push_back(circle_centers(v.state, v.geom));
  DriverAgent& agent = agents_.at(agent_index);
  return decide(agent, vehicles_[index_of(agent.vehicle_id)], circles);
}

ControlInput World::decide(DriverAgent& agent, const Vehicle& self,
                           std::span<const CircleSet> circles) {
  const DriverParams& p = agent.params;
  const VehicleState& me = self.state;
  const int lane = road_.lane_of(me.y);
  const DriverView view{me, &p, lane};

  maybe_change_lane(agent, self);

  const int sub = config_.idm_substeps;
  const double dt = config_.dt;
  double accel = idm_step_acceleration(me.v, kFreeRoadGap, 0.0, p, dt, sub);
  std::vector<int> present;
  agent.last_yield = {};

  for (std::size_t j = 0; j < vehicles_.size(); ++j) {
    const Vehicle& other = vehicles_[j];
    if (other.id == self.id) continue;
    const double dx = other.state.x - me.x;
    if (dx < -(self.geom.h + other.geom.h) || dx > config_.lookahead) continue;
    if (std::abs(other.state.y - me.y) > 2.0 * road_.lane_width) continue;

    const CircleSet& cs = circles[j];
    double gap = kFreeRoadGap;
    bool in_path = false;
    for (const Point2& c : cs.centers) {
      if (c.x > me.x && std::abs(c.y - me.y) < self.geom.w + cs.radius) {
        in_path = true;
        gap = std::min(gap, (c.x - cs.radius) - (me.x + self.geom.h));
      }
    }
    const double lead_v = other.state.v * std::cos(other.state.psi);
    const int other_lane = road_.lane_of(other.state.y);

    if (in_path) {
      accel = std::min(accel, idm_step_acceleration(me.v, gap, me.v - lead_v, p, dt, sub));
      if (other_lane != lane) {
        present.push_back(other.id);
        if (classify_intruder(view, road_, other.state, other.geom, config_.zones) ==
            YieldZone::kForced) {
          agent.last_yield = {YieldZone::kForced, true};
        }
      }
      continue;
    }

    if (dx <= 0.0 || dx > config_.zones.b_length) continue;
    if (std::abs(other_lane - lane) != 1) continue;
    if (classify_intruder(view, road_, other.state, other.geom, config_.zones) !=
        YieldZone::kSelective) {
      continue;
    }
    present.push_back(other.id);
    bool yielding = false;
    if (auto held = agent.yields.lookup(other.id)) {
      yielding = *held;
    } else {
      Rng rng = make_rng(agent.seed, Stream::kYield,
                         (static_cast<std::uint64_t>(other.id) << 32) ^
                             static_cast<std::uint64_t>(steps_));
      yielding = yield_decision(view, road_, other.id, other.state, other.geom, config_.zones,
                                agent.yields, rng)
                     .yielding;
    }
    if (agent.last_yield.zone != YieldZone::kForced) {
      agent.last_yield = {YieldZone::kSelective, yielding};
    }
    if (yielding) {
      const double yield_gap = (other.state.x - other.geom.h) - (me.x + self.geom.h);
      accel = std::min(accel,
                       idm_step_acceleration(me.v, yield_gap, me.v - lead_v, p, dt, sub));
    }
  }
  agent.yields.retain(present);

  double target_y = road_.lane_center(agent.target_lane);
  if (config_.noise.enabled) {
    const double u = hashed_unit(agent.seed, Stream::kNoise, static_cast<std::uint64_t>(steps_));
    // With v clamped at zero, noise on a driver held at rest only ever pushes
    // it forward, so a stopped queue would creep into whatever blocks it.
    if (me.v + accel * dt > 0.0) accel += config_.noise.accel_amplitude * (2.0 * u - 1.0);
    target_y += config_.noise.lateral_amplitude *
                std::sin(2.0 * std::numbers::pi * time_ / config_.noise.lateral_period +
                         agent.phase);
  }
  return {accel, lane_keeping_steer(me, target_y, config_.steering)};
}

void World::maybe_change_lane(DriverAgent& agent, const Vehicle& self) {
  if (!config_.mobil_enabled) return;
  if (agent.cooldown > 0) {
    --agent.cooldown;
    return;
  }
  const VehicleState& me = self.state;
  const int lane = road_.lane_of(me.y);
  if (agent.target_lane != lane || std::abs(me.y - road_.lane_center(lane)) > 0.3) return;

  auto open = [&](int l) {
    return road_.has_lane(l) && std::find(config_.closed_lanes.begin(), config_.closed_lanes.end(),
                                          l) == config_.closed_lanes.end();
  };
  auto neighbors = [&](int l) {
    LaneNeighbors out;
    double best_ahead = kFreeRoadGap;
    double best_behind = -kFreeRoadGap;
    for (const Vehicle& v : vehicles_) {
      if (v.id == self.id || road_.lane_of(v.state.y) != l) continue;
      const double dx = v.state.x - me.x;
      if (std::abs(dx) > config_.lookahead) continue;
      const DriverParams& params = v.agent >= 0 ? agents_[v.agent].params : agent.params;
      MobilVehicle mv{v.state, params};
      mv.params.geom = v.geom;
      if (dx > 0.0 && dx < best_ahead) {
        best_ahead = dx;
        out.leader = mv;
      } else if (dx <= 0.0 && dx > best_behind) {
        best_behind = dx;
        out.follower = mv;
      }
    }
    return out;
  };

  MobilInputs in;
  in.self = {me, agent.params};
  in.current = neighbors(lane);
  if (open(lane + 1)) in.left = neighbors(lane + 1);
  if (open(lane - 1)) in.right = neighbors(lane - 1);
  if (!in.left && !in.right) return;

  switch (mobil_lane_change(in, config_.mobil)) {
    case LaneChange::kLeft:
      agent.target_lane = lane + 1;
      agent.cooldown = config_.mobil_cooldown_steps;
      break;
    case LaneChange::kRight:
      agent.target_lane = lane - 1;
      agent.cooldown = config_.mobil_cooldown_steps;
      break;
    case LaneChange::kStay:
      break;
  }
}

void World::step(const ControlInput& ego_input) { advance(std::nullopt, ego_input); }

void World::step_with_ego_state(const VehicleState& ego_next) { advance(ego_next, {}); }

void World::advance(const std::optional<VehicleState>& ego_next, const ControlInput& ego_input) {
  std::vector<CircleSet> circles;
  circles.reserve(vehicles_.size());
  for (const Vehicle& v : vehicles_) circles.push_back(circle_centers(v.state, v.geom));

  std::vector<ControlInput> inputs(vehicles_.size());
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const Vehicle& v = vehicles_[i];
    if (v.kind == VehicleKind::kDriver) inputs[i] = decide(agents_[v.agent], v, circles);
  }

  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    Vehicle& v = vehicles_[i];
    switch (v.kind) {
      case VehicleKind::kDriver:
        v.state = lanemerge::step(v.state, inputs[i], v.geom, config_.dt);
        break;
      case VehicleKind::kEgo:
        v.state = ego_next ? *ego_next : lanemerge::step(v.state, ego_input, v.geom, config_.dt);
        break;
      case VehicleKind::kStatic:
        break;
    }
  }
  time_ += config_.dt;
  ++steps_;
  despawn();
  refill();
}

void World::despawn() {
  bool removed = false;
  for (std::size_t i = vehicles_.size(); i-- > 0;) {
    const Vehicle& v = vehicles_[i];
    if (v.kind == VehicleKind::kDriver && v.state.x > config_.despawn_x) {
      agents_.erase(agents_.begin() + v.agent);
      vehicles_.erase(vehicles_.begin() + static_cast<std::ptrdiff_t>(i));
      removed = true;
    }
  }
  if (removed) reindex();
}

void World::reindex() {
  int k = 0;
  for (Vehicle& v : vehicles_) {
    v.agent = v.kind == VehicleKind::kDriver ? k++ : -1;
  }
}

}  // namespace lanemerge
