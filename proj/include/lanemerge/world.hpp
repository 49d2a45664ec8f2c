#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lanemerge/drivers.hpp"
#include "lanemerge/dynamics.hpp"
#include "lanemerge/geometry.hpp"
#include "lanemerge/road.hpp"

namespace lanemerge {

enum class VehicleKind { kEgo, kDriver, kStatic };

struct Vehicle {
  int id = -1;
  VehicleKind kind = VehicleKind::kDriver;
  VehicleState state;
  BodyGeometry geom;
  int agent = -1;  // index into World::drivers(), -1 for non-drivers
};

// Cooperativeness rule applied to every sampled driver.
enum class Regime { kCooperative, kMixed, kAggressive };

struct NoiseConfig {
  bool enabled = true;
  double accel_amplitude = 0.3;     // uniform on [-amp, amp] (m/s^2)
  double lateral_amplitude = 0.05;  // lane-center oscillation (m)
  double lateral_period = 4.0;      // s
  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct TrafficConfig {
  double dt = 0.4;
  DriverParamRanges ranges;
  MobilParams mobil;
  bool mobil_enabled = true;
  int mobil_cooldown_steps = 10;
  int idm_substeps = 10;  // IDM integration sub-steps per dt
  ZoneConfig zones;
  SteeringGains steering;
  NoiseConfig noise;
  std::vector<int> closed_lanes{0};   // drivers never change into these
  std::vector<int> inflow_lanes{1, 2};
  double head_x = 80.0;     // first vehicle of an empty inflow lane
  double spawn_x = -40.0;   // lanes are refilled down to here
  double despawn_x = 100.0; // drivers beyond this leave the scene
  double lookahead = 60.0;  // perception range for leaders (m)

  friend bool operator==(const TrafficConfig&, const TrafficConfig&) = default;
};

struct DriverAgent {
  int vehicle_id = -1;
  DriverParams params;
  int target_lane = 0;
  std::uint64_t seed = 0;  // counter-based noise and yield draws
  double phase = 0.0;
  int cooldown = 0;
  YieldMemory yields;
  YieldDecision last_yield;
};

// Full simulator state. Copyable so that predictors can roll clones forward.
class World {
 public:
  World(Road road, TrafficConfig config, Regime regime, std::uint64_t spawn_seed);

  int add_vehicle(VehicleKind kind, const VehicleState& state, const BodyGeometry& geom);
  int add_driver(const VehicleState& state, const DriverParams& params, std::uint64_t seed);

  // Samples a driver for `lane` under the regime rule (used by inflow too).
  DriverParams sample_driver_for_spawn(std::uint64_t counter) const;

  // Fills every inflow lane upstream of its rearmost vehicle down to spawn_x.
  void refill();

  const Road& road() const { return road_; }
  const TrafficConfig& config() const { return config_; }
  Regime regime() const { return regime_; }
  double time() const { return time_; }
  long step_count() const { return steps_; }

  std::span<const Vehicle> vehicles() const { return vehicles_; }
  std::span<const DriverAgent> drivers() const { return agents_; }
  const Vehicle* find(int id) const;
  std::optional<int> ego_id() const;
  const Vehicle& ego() const;

  // Control of one simulated driver computed from the current snapshot. Only
  // that driver's own memory (yield draws, lane target) is updated.
  ControlInput driver_step(std::size_t agent_index);

  void step(const ControlInput& ego_input);
  // Same as step() but places the ego at `ego_next` instead of integrating it.
  void step_with_ego_state(const VehicleState& ego_next);
  void step_without_ego() { advance(std::nullopt, {}); }

 private:
  void advance(const std::optional<VehicleState>& ego_next, const ControlInput& ego_input);
  ControlInput decide(DriverAgent& agent, const Vehicle& self, std::span<const CircleSet> circles);
  void maybe_change_lane(DriverAgent& agent, const Vehicle& self);
  void despawn();
  void reindex();
  std::size_t index_of(int id) const;

  Road road_;
  TrafficConfig config_;
  Regime regime_;
  std::uint64_t spawn_seed_;
  std::uint64_t spawn_counter_ = 0;
  int next_id_ = 0;
  double time_ = 0.0;
  long steps_ = 0;
  std::vector<Vehicle> vehicles_;
  std::vector<DriverAgent> agents_;
};

}  // namespace lanemerge
