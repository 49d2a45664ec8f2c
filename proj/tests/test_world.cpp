#include <algorithm>
#include <map>

#include "gtest/gtest.h"
#include "lanemerge/world.hpp"

namespace lanemerge {
namespace {

World traffic(Regime regime, std::uint64_t seed) {
  World w(Road{}, TrafficConfig{}, regime, seed);
  w.refill();
  return w;
}

std::map<int, std::vector<const Vehicle*>> by_lane(const World& w) {
  std::map<int, std::vector<const Vehicle*>> lanes;
  for (const Vehicle& v : w.vehicles()) lanes[w.road().lane_of(v.state.y)].push_back(&v);
  for (auto& [lane, vs] : lanes) {
    std::sort(vs.begin(), vs.end(),
              [](const Vehicle* a, const Vehicle* b) { return a->state.x < b->state.x; });
  }
  return lanes;
}

TEST(World, RefillPacksInflowLanesBelowOneCarLength) {
  const World w = traffic(Regime::kMixed, 3);
  const auto lanes = by_lane(w);
  ASSERT_TRUE(lanes.count(1));
  ASSERT_TRUE(lanes.count(2));
  EXPECT_FALSE(lanes.count(0));
  for (const auto& [lane, vs] : lanes) {
    ASSERT_GT(vs.size(), 10u);
    for (std::size_t i = 1; i < vs.size(); ++i) {
      const double gap =
          (vs[i]->state.x - vs[i]->geom.h) - (vs[i - 1]->state.x + vs[i - 1]->geom.h);
      EXPECT_GE(gap, 1.0);
      EXPECT_LT(gap, 2.0 * vs[i]->geom.h);
    }
  }
}

TEST(World, RegimeFixesCooperativeness) {
  for (std::uint64_t seed = 1; seed < 4; ++seed) {
    for (const DriverAgent& a : traffic(Regime::kCooperative, seed).drivers()) {
      EXPECT_EQ(a.params.eta_c, 1.0);
    }
    for (const DriverAgent& a : traffic(Regime::kAggressive, seed).drivers()) {
      EXPECT_EQ(a.params.eta_c, 0.0);
    }
  }
  const World mixed = traffic(Regime::kMixed, 1);
  double lo = 1.0;
  double hi = 0.0;
  for (const DriverAgent& a : mixed.drivers()) {
    lo = std::min(lo, a.params.eta_c);
    hi = std::max(hi, a.params.eta_c);
  }
  EXPECT_LT(lo, 0.3);
  EXPECT_GT(hi, 0.7);
}

TEST(World, IdenticalSeedsGiveIdenticalTrajectories) {
  World a = traffic(Regime::kMixed, 77);
  World b = traffic(Regime::kMixed, 77);
  for (int k = 0; k < 60; ++k) {
    a.step_without_ego();
    b.step_without_ego();
  }
  ASSERT_EQ(a.vehicles().size(), b.vehicles().size());
  for (std::size_t i = 0; i < a.vehicles().size(); ++i) {
    EXPECT_EQ(a.vehicles()[i].id, b.vehicles()[i].id);
    EXPECT_EQ(a.vehicles()[i].state, b.vehicles()[i].state);
  }
}

TEST(World, DifferentSeedsDiffer) {
  const World a = traffic(Regime::kMixed, 1);
  const World b = traffic(Regime::kMixed, 2);
  EXPECT_NE(a.drivers().front().params, b.drivers().front().params);
}

TEST(World, CopiesEvolveIndependently) {
  World a = traffic(Regime::kMixed, 5);
  World b = a;
  b.step_without_ego();
  EXPECT_EQ(a.step_count(), 0);
  EXPECT_EQ(b.step_count(), 1);
  a.step_without_ego();
  EXPECT_EQ(a.vehicles().front().state, b.vehicles().front().state);
}

TEST(World, DriversStayOffTheClosedLaneAndNeverOverlap) {
  World w = traffic(Regime::kAggressive, 9);
  for (int k = 0; k < 100; ++k) {
    w.step_without_ego();
    for (const Vehicle& v : w.vehicles()) {
      ASSERT_GT(v.state.y, 1.85) << "vehicle " << v.id << " at step " << k;
      ASSERT_GE(v.state.v, 0.0);
    }
    const auto vs = w.vehicles();
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = i + 1; j < vs.size(); ++j) {
        ASSERT_GT(euclidean_min_gap(vs[i].state, vs[i].geom, vs[j].state, vs[j].geom), 0.0)
            << vs[i].id << " and " << vs[j].id << " at step " << k;
      }
    }
  }
}

TEST(World, DespawnedDriversAreReplacedUpstream) {
  World w = traffic(Regime::kCooperative, 4);
  const std::size_t initial = w.vehicles().size();
  for (int k = 0; k < 200; ++k) w.step_without_ego();
  for (const Vehicle& v : w.vehicles()) EXPECT_LE(v.state.x, w.config().despawn_x);
  EXPECT_GT(w.vehicles().size(), initial / 2);
}

TEST(World, NoiseDoesNotCreepAStoppedDriverForward) {
  TrafficConfig cfg;
  cfg.inflow_lanes = {};
  ASSERT_TRUE(cfg.noise.enabled);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    World w(Road{}, cfg, Regime::kAggressive, seed);
    w.add_vehicle(VehicleKind::kStatic, {20, 3.7, 0, 0}, BodyGeometry{});
    const DriverParams p = sample_driver(seed, cfg.ranges);
    // Bumper gap 0.5 m, inside every sampled s0.
    w.add_driver({20 - 2 * p.geom.h - 0.5, 3.7, 0, 0}, p, seed);
    const double x0 = w.vehicles()[1].state.x;
    for (int k = 0; k < 200; ++k) w.step_without_ego();
    EXPECT_EQ(w.vehicles()[1].state.x, x0) << "seed " << seed;
    EXPECT_EQ(w.vehicles()[1].state.v, 0.0) << "seed " << seed;
  }
}

TEST(World, EgoFollowsItsInput) {
  TrafficConfig cfg;
  cfg.inflow_lanes = {};
  World w(Road{}, cfg, Regime::kMixed, 1);
  const int id = w.add_vehicle(VehicleKind::kEgo, {0, 0, 0, 2}, BodyGeometry{});
  EXPECT_EQ(w.ego_id(), id);
  w.step({1.0, 0.1});
  EXPECT_EQ(w.ego().state, step({0, 0, 0, 2}, {1.0, 0.1}, BodyGeometry{}, 0.4));
  w.step_with_ego_state({5, 1, 0, 3});
  EXPECT_EQ(w.ego().state, (VehicleState{5, 1, 0, 3}));
  EXPECT_THROW(w.add_vehicle(VehicleKind::kDriver, {}, BodyGeometry{}), std::invalid_argument);
}

}  // namespace
}  // namespace lanemerge
