#include <cmath>
#include <filesystem>
#include <fstream>

#include "gtest/gtest.h"
#include "lanemerge/harness.hpp"
#include "lanemerge/predictors.hpp"

namespace fs = std::filesystem;

namespace lanemerge {
namespace {

ObservationWindow make_window(std::vector<std::vector<Point2>> tracks, int ego_index = -1) {
  ObservationWindow w;
  w.t_obs = static_cast<int>(tracks.front().size());
  for (std::size_t i = 0; i < tracks.size(); ++i) w.ids.push_back(static_cast<int>(i) + 10);
  w.tracks = std::move(tracks);
  w.ego_index = ego_index;
  return w;
}

std::vector<Point2> line_track(Point2 start, Point2 step, int n) {
  std::vector<Point2> t;
  for (int k = 0; k < n; ++k) t.push_back({start.x + k * step.x, start.y + k * step.y});
  return t;
}

TEST(ConstantVelocity, ExtrapolatesLastDisplacement) {
  auto track = line_track({0, 0}, {1, 0}, 7);
  track.push_back({track.back().x + 2.0, 0.5});  // last step moved (2, 0.5)
  const ObservationWindow w = make_window({track});
  ConstantVelocityPredictor cv(2);
  const PredictionSheet s = cv.predict(w, {});
  ASSERT_EQ(s.steps(), 2);
  EXPECT_EQ(s.tracks[0][0], (Point2{10.0, 1.0}));
  EXPECT_EQ(s.tracks[0][1], (Point2{12.0, 1.5}));
  EXPECT_EQ(s.ids, w.ids);
}

TEST(ConstantVelocity, StationaryStaysPut) {
  const ObservationWindow w = make_window({line_track({3, 4}, {0, 0}, 8)});
  ConstantVelocityPredictor cv(2);
  const PredictionSheet s = cv.predict_horizon(w, {}, 7);
  ASSERT_EQ(s.steps(), 7);
  for (const Point2& p : s.tracks[0]) EXPECT_EQ(p, (Point2{3, 4}));
}

TEST(ConstantVelocity, ConstantDisplacementAcrossHorizon) {
  const ObservationWindow w =
      make_window({line_track({0, 0}, {1.3, 0.1}, 8), line_track({5, 3.7}, {0.7, -0.02}, 8)});
  ConstantVelocityPredictor cv(2);
  const PredictionSheet s = cv.predict_horizon(w, {}, 7);
  for (const auto& track : s.tracks) {
    const double dx = track[1].x - track[0].x;
    const double dy = track[1].y - track[0].y;
    for (std::size_t k = 2; k < track.size(); ++k) {
      EXPECT_NEAR(track[k].x - track[k - 1].x, dx, 1e-12);
      EXPECT_NEAR(track[k].y - track[k - 1].y, dy, 1e-12);
    }
  }
}

TEST(ConstantVelocity, EgoRowIsThePlan) {
  const ObservationWindow w =
      make_window({line_track({0, 0}, {1, 0}, 8), line_track({0, 3.7}, {1, 0}, 8)}, 0);
  ConstantVelocityPredictor cv(2);
  const std::vector<VehicleState> plan{{8.5, 0.2, 0, 1}, {9.0, 0.5, 0, 1}, {9.4, 0.9, 0, 1}};
  const PredictionSheet s = cv.predict_horizon(w, plan, 3);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(s.tracks[0][k], (Point2{plan[k].x, plan[k].y}));
  }
  EXPECT_EQ(s.tracks[1][2], (Point2{10, 3.7}));
}

TEST(Predictors, RefuseShortWindow) {
  ObservationWindow w = make_window({line_track({0, 0}, {1, 0}, 8)});
  w.tracks[0].pop_back();
  ConstantVelocityPredictor cv;
  EXPECT_THROW(cv.predict(w, {}), WarmupError);
  EXPECT_THROW(cv.predict_horizon(w, {}, 3), WarmupError);
}

TEST(TrafficHistory, BackfillsWithEarliestPosition) {
  TrafficHistory h;
  TrafficSnapshot a;
  a.ids = {1};
  a.states = {{2, 0, 0, 1}};
  TrafficSnapshot b;
  b.ids = {1, 2};
  b.states = {{3, 0, 0, 1}, {9, 3.7, 0, 1}};
  h.push(a);
  h.push(b);
  const ObservationWindow w = h.window(8, 1);
  ASSERT_TRUE(w.full());
  EXPECT_EQ(w.ego_index, 0);
  for (int k = 0; k < 7; ++k) EXPECT_EQ(w.tracks[0][k], (Point2{2, 0}));
  EXPECT_EQ(w.tracks[0][7], (Point2{3, 0}));
  for (const Point2& p : w.tracks[1]) EXPECT_EQ(p, (Point2{9, 3.7}));
}

TEST(TrafficHistory, KeepsOnlyTheLastObservations) {
  TrafficHistory h(4);
  for (int k = 0; k < 10; ++k) {
    TrafficSnapshot s;
    s.ids = {0};
    s.states = {{static_cast<double>(k), 0, 0, 0}};
    h.push(s);
  }
  EXPECT_EQ(h.size(), 4u);
  const ObservationWindow w = h.window(3, std::nullopt);
  EXPECT_EQ(w.tracks[0].front().x, 7.0);
  EXPECT_EQ(w.tracks[0].back().x, 9.0);
}

struct Live {
  Scenario scenario;
  TrafficHistory history;
};

Live live_scenario(Regime regime, std::uint64_t seed) {
  Live l{build_scenario(SimulationConfig{}, regime, seed), TrafficHistory{}};
  l.history.push(l.scenario.world);
  return l;
}

TEST(GroundTruth, MatchesTheSimulationExactly) {
  Live l = live_scenario(Regime::kMixed, 3);
  World& world = l.scenario.world;
  const std::vector<ControlInput> controls{{1, 0.1}, {1, 0.2}, {0.5, 0.1}, {0, 0},
                                           {0, -0.1}, {-1, 0}, {0, 0}};
  std::vector<VehicleState> plan;
  VehicleState s = world.ego().state;
  for (const ControlInput& u : controls) plan.push_back(s = step(s, u, world.ego().geom, 0.4));

  GroundTruthPredictor oracle(2);
  oracle.observe(world);
  const ObservationWindow w = l.history.window(8, l.scenario.ego_id);
  const PredictionSheet sheet = oracle.predict_horizon(w, plan, 7);

  for (int k = 0; k < 7; ++k) {
    world.step(controls[k]);
    for (std::size_t i = 0; i < sheet.ids.size(); ++i) {
      const Vehicle* v = world.find(sheet.ids[i]);
      if (v == nullptr) continue;  // left the scene
      ASSERT_NEAR(sheet.tracks[i][k].x, v->state.x, 1e-12) << "id " << sheet.ids[i];
      ASSERT_NEAR(sheet.tracks[i][k].y, v->state.y, 1e-12) << "id " << sheet.ids[i];
    }
  }
}

TEST(GroundTruth, SingleCallCoversItsOwnSteps) {
  Live l = live_scenario(Regime::kCooperative, 4);
  GroundTruthPredictor oracle(2);
  oracle.observe(l.scenario.world);
  const ObservationWindow w = l.history.window(8, l.scenario.ego_id);
  EXPECT_EQ(oracle.predict(w, {}).steps(), 2);
}

TEST(GroundTruth, RequiresAnObservedWorld) {
  GroundTruthPredictor oracle;
  const ObservationWindow w = make_window({line_track({0, 0}, {1, 0}, 8)});
  EXPECT_THROW(oracle.predict(w, {}), PredictorError);
}

// A cooperative driver just behind the ego in the next lane reacts to the ego
// nosing in but not to an ego that stays put.
TEST(GroundTruth, ReactsToTheEgoPlan) {
  TrafficConfig cfg;
  cfg.inflow_lanes = {};
  cfg.noise.enabled = false;
  World world(Road{}, cfg, Regime::kCooperative, 1);
  DriverParams p;
  p.eta_c = 1.0;
  p.v_ref = 4.0;
  const int driver = world.add_driver({0, 3.7, 0, 3.0}, p, 5);
  const int ego = world.add_vehicle(VehicleKind::kEgo, {6.0, 0.0, 0, 2.0}, BodyGeometry{});
  TrafficHistory h;
  h.push(world);
  const ObservationWindow w = h.window(8, ego);

  auto roll = [&](double delta) {
    std::vector<VehicleState> plan;
    VehicleState s = world.ego().state;
    for (int k = 0; k < 7; ++k) plan.push_back(s = step(s, {0.5, delta}, BodyGeometry{}, 0.4));
    GroundTruthPredictor oracle;
    oracle.observe(world);
    return oracle.predict_horizon(w, plan, 7);
  };
  const PredictionSheet straight = roll(0.0);
  const PredictionSheet merging = roll(0.3);
  const int i = w.ids[0] == driver ? 0 : 1;
  EXPECT_LT(merging.tracks[i].back().x, straight.tracks[i].back().x - 0.1);
}

// ---------------------------------------------------------------------------

std::vector<TrafficSnapshot> synthetic_episode(int length, int vehicles) {
  std::vector<TrafficSnapshot> frames;
  for (int t = 0; t < length; ++t) {
    TrafficSnapshot s;
    s.time = 0.4 * t;
    for (int v = 0; v < vehicles; ++v) {
      s.ids.push_back(v);
      s.states.push_back({v * 7.0 + 1.1 * t, 3.7 * (v % 2), 0, 2.75});
    }
    frames.push_back(s);
  }
  return frames;
}

TEST(TrainingExport, WindowArithmetic) {
  EXPECT_EQ(make_training_windows(synthetic_episode(10, 4), 8, 2, 0, 1).size(), 1u);
  EXPECT_EQ(make_training_windows(synthetic_episode(10, 4), 8, 2, 0, 1)[0].vehicle_ids.size(), 4u);
  EXPECT_EQ(make_training_windows(synthetic_episode(37, 2), 8, 2, 0, 1).size(), 28u);
  EXPECT_TRUE(make_training_windows(synthetic_episode(9, 2), 8, 2, 0, 1).empty());
}

TEST(TrainingExport, NoiselessTargetsAreRawPositions) {
  const auto frames = synthetic_episode(12, 3);
  const auto windows = make_training_windows(frames, 8, 2, 0.0, 1);
  for (const TrainingWindow& w : windows) {
    for (std::size_t v = 0; v < w.vehicle_ids.size(); ++v) {
      for (int k = 0; k < 8; ++k) {
        const VehicleState s = frames[w.window_id + k].states[v];
        EXPECT_EQ(w.obs[v][k], (Point2{s.x, s.y}));
      }
      for (int k = 0; k < 2; ++k) {
        const VehicleState s = frames[w.window_id + 8 + k].states[v];
        EXPECT_EQ(w.pred[v][k], (Point2{s.x, s.y}));
      }
    }
  }
}

TEST(TrainingExport, NoiseStaysWithinAmplitudeOnObservations) {
  const auto frames = synthetic_episode(12, 3);
  const auto clean = make_training_windows(frames, 8, 2, 0.0, 1);
  const auto noisy = make_training_windows(frames, 8, 2, 0.25, 1);
  bool moved = false;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    for (std::size_t v = 0; v < clean[i].obs.size(); ++v) {
      for (int k = 0; k < 8; ++k) {
        EXPECT_LE(std::abs(noisy[i].obs[v][k].x - clean[i].obs[v][k].x), 0.25);
        EXPECT_LE(std::abs(noisy[i].obs[v][k].y - clean[i].obs[v][k].y), 0.25);
        moved |= noisy[i].obs[v][k].x != clean[i].obs[v][k].x;
      }
      EXPECT_EQ(noisy[i].pred[v], clean[i].pred[v]);
    }
  }
  EXPECT_TRUE(moved);
}

TEST(TrainingExport, SkipsVehiclesMissingFromTheWindow) {
  auto frames = synthetic_episode(10, 3);
  frames[4].ids.pop_back();
  frames[4].states.pop_back();
  const auto windows = make_training_windows(frames, 8, 2, 0, 1);
  ASSERT_EQ(windows.size(), 1u);
  EXPECT_EQ(windows[0].vehicle_ids, (std::vector<int>{0, 1}));
}

TEST(TrainingExport, CsvRoundTripIsExact) {
  fs::create_directories(TEST_TMP_DIR);
  const fs::path path = fs::path(TEST_TMP_DIR) / "training_roundtrip.csv";
  const auto windows = make_training_windows(synthetic_episode(14, 3), 8, 2, 0.173, 9);
  EXPECT_EQ(export_training_batch(synthetic_episode(14, 3), path, 8, 2, 0.173, 9), windows.size());
  const auto back = read_training_csv(path);
  ASSERT_EQ(back.size(), windows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].window_id, windows[i].window_id);
    EXPECT_EQ(back[i].vehicle_ids, windows[i].vehicle_ids);
    EXPECT_EQ(back[i].obs, windows[i].obs);
    EXPECT_EQ(back[i].pred, windows[i].pred);
  }
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "window_id,vehicle_id,step_index,role,x,y");
}

TEST(TrainingExport, AppendKeepsOneHeader) {
  fs::create_directories(TEST_TMP_DIR);
  const fs::path path = fs::path(TEST_TMP_DIR) / "training_append.csv";
  const auto frames = synthetic_episode(11, 2);
  const std::size_t n = export_training_batch(frames, path, 8, 2, 0, 1);
  export_training_batch(frames, path, 8, 2, 0, 2, static_cast<int>(n), true);
  EXPECT_EQ(read_training_csv(path).size(), 2 * n);
  std::ifstream in(path);
  int headers = 0;
  for (std::string line; std::getline(in, line);) headers += line.rfind("window_id", 0) == 0;
  EXPECT_EQ(headers, 1);
}

// ---------------------------------------------------------------------------

PredictionSheet sheet(std::vector<std::vector<Point2>> tracks) {
  PredictionSheet s;
  for (std::size_t i = 0; i < tracks.size(); ++i) s.ids.push_back(static_cast<int>(i));
  s.tracks = std::move(tracks);
  return s;
}

TEST(AdeFde, PerfectPrediction) {
  const PredictionSheet t = sheet({{{0, 0}, {1, 1}}, {{2, 2}, {3, 5}}});
  const DisplacementError e = ade_fde(t, t);
  EXPECT_EQ(e.ade, 0.0);
  EXPECT_EQ(e.fde, 0.0);
}

TEST(AdeFde, UniformOffset) {
  const PredictionSheet t = sheet({{{0, 0}, {1, 1}}, {{2, 2}, {3, 5}}});
  const PredictionSheet p = sheet({{{0, 1}, {1, 2}}, {{2, 3}, {3, 6}}});
  const DisplacementError e = ade_fde(p, t);
  EXPECT_DOUBLE_EQ(e.ade, 1.0);
  EXPECT_DOUBLE_EQ(e.fde, 1.0);
}

TEST(AdeFde, MixedOffsets) {
  const PredictionSheet t = sheet({{{0, 0}, {0, 0}, {0, 0}}, {{0, 0}, {0, 0}, {0, 0}}});
  const PredictionSheet p = sheet({{{3, 4}, {0, 1}, {6, 8}}, {{0, 0}, {1, 0}, {0, 2}}});
  // Errors 5, 1, 10, 0, 1, 2.
  const DisplacementError e = ade_fde(p, t);
  EXPECT_DOUBLE_EQ(e.ade, 19.0 / 6.0);
  EXPECT_DOUBLE_EQ(e.fde, 6.0);
}

TEST(AdeFde, ShapeMismatchThrows) {
  const PredictionSheet a = sheet({{{0, 0}, {1, 1}}});
  const PredictionSheet b = sheet({{{0, 0}}});
  EXPECT_THROW(ade_fde(a, b), std::invalid_argument);
  EXPECT_THROW(ade_fde(sheet({{{0, 0}}, {{1, 1}}}), b), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(WireFormat, RequestCarriesWindowAndPlan) {
  const ObservationWindow w =
      make_window({line_track({0, 0}, {1, 0}, 3), line_track({5, 3.7}, {1, 0}, 3)}, 0);
  const std::vector<Point2> plan{{3.5, 0.25}};
  const std::string line = encode_request(w, plan, 2, 17);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_NE(line.find("\"ego_plan\":[[3.5,0.25]]"), std::string::npos);
  EXPECT_NE(line.find("\"t_obs\":3"), std::string::npos);
  EXPECT_NE(line.find("\"id\":17"), std::string::npos);
  EXPECT_NE(line.find("\"vehicles\":[[[0.0,0.0],[1.0,0.0],[2.0,0.0]]"), std::string::npos);
}

TEST(WireFormat, DecodesAndValidatesResponses) {
  const ObservationWindow w = make_window({line_track({0, 0}, {1, 0}, 3)});
  std::uint64_t id = 0;
  const PredictionSheet s = decode_response(R"({"id":4,"pred":[[[1,2],[3,4]]]})", w, 2, &id);
  EXPECT_EQ(id, 4u);
  EXPECT_EQ(s.tracks[0][1], (Point2{3, 4}));
  EXPECT_THROW(decode_response("nope", w, 2), PredictorError);
  EXPECT_THROW(decode_response(R"({"pred":[]})", w, 2), PredictorError);
  EXPECT_THROW(decode_response(R"({"pred":[[[1,2]]]})", w, 2), PredictorError);
  EXPECT_THROW(decode_response(R"({"pred":[[[1,"a"],[3,4]]]})", w, 2), PredictorError);
  EXPECT_THROW(decode_response(R"([1,2])", w, 2), PredictorError);
}

ObservationWindow moving_window() {
  return make_window({line_track({0, 0}, {1, 0}, 8), line_track({4, 3.7}, {0.5, 0.01}, 8)}, 0);
}

ExternalPredictorOptions fake(const std::string& flags = "", int deadline_ms = 2000) {
  ExternalPredictorOptions o;
  o.command = std::string(FAKE_PREDICTOR) + " " + flags;
  o.deadline = std::chrono::milliseconds(deadline_ms);
  return o;
}

TEST(ExternalPredictor, AgreesWithConstantVelocityStandIn) {
  ExternalPredictor ext(fake());
  ConstantVelocityPredictor cv;
  const ObservationWindow w = moving_window();
  const std::vector<VehicleState> plan{{8, 0.1, 0, 2}, {9, 0.3, 0, 2}, {10, 0.6, 0, 2}};
  const PredictionSheet a = ext.predict_horizon(w, plan, 7);
  const PredictionSheet b = cv.predict_horizon(w, plan, 7);
  ASSERT_EQ(a.tracks.size(), b.tracks.size());
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    for (int k = 0; k < 7; ++k) {
      EXPECT_NEAR(a.tracks[i][k].x, b.tracks[i][k].x, 1e-12);
      EXPECT_NEAR(a.tracks[i][k].y, b.tracks[i][k].y, 1e-12);
    }
  }
}

TEST(ExternalPredictor, SkipsStaleAnswers) {
  ExternalPredictor ext(fake("--stale"));
  EXPECT_EQ(ext.predict(moving_window(), {}).steps(), 2);
  EXPECT_EQ(ext.predict(moving_window(), {}).steps(), 2);
}

TEST(ExternalPredictor, MissedDeadline) {
  ExternalPredictor ext(fake("--sleep-ms 300", 50));
  EXPECT_THROW(ext.predict(moving_window(), {}), DeadlineExceeded);
}

TEST(ExternalPredictor, MalformedAnswer) {
  ExternalPredictor ext(fake("--garbage"));
  EXPECT_THROW(ext.predict(moving_window(), {}), PredictorError);
}

TEST(ExternalPredictor, ChildExitIsAnError) {
  ExternalPredictor ext(fake("--exit", 500));
  EXPECT_THROW(ext.predict(moving_window(), {}), PredictorError);
}

TEST(ExternalPredictor, ClonesAreIndependentProcesses) {
  ExternalPredictor ext(fake());
  auto copy = ext.clone();
  const ObservationWindow w = moving_window();
  EXPECT_EQ(copy->predict(w, {}).tracks, ext.predict(w, {}).tracks);
}

TEST(PredictorKind, ParsesCliNames) {
  EXPECT_EQ(parse_predictor_kind("cv"), PredictorKind::kConstantVelocity);
  EXPECT_EQ(parse_predictor_kind("oracle"), PredictorKind::kGroundTruth);
  EXPECT_EQ(parse_predictor_kind("external"), PredictorKind::kExternal);
  EXPECT_FALSE(parse_predictor_kind("sgan"));
  EXPECT_EQ(to_string(PredictorKind::kGroundTruth), "oracle");
}

}  // namespace
}  // namespace lanemerge
