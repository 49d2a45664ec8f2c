#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lanemerge/geometry.hpp"
#include "lanemerge/world.hpp"

namespace lanemerge {

// Poses of every vehicle at one time step.
struct TrafficSnapshot {
  double time = 0.0;
  std::vector<int> ids;
  std::vector<VehicleState> states;

  static TrafficSnapshot capture(const World& world);
  std::optional<VehicleState> state_of(int id) const;
};

// Last t_obs center positions per vehicle, oldest first.
struct ObservationWindow {
  int t_obs = 8;
  std::vector<int> ids;
  int ego_index = -1;
  std::vector<std::vector<Point2>> tracks;

  bool full() const;
};

// Next `steps` predicted center positions per vehicle, same ordering as the
// window the prediction was made from.
struct PredictionSheet {
  std::vector<int> ids;
  std::vector<std::vector<Point2>> tracks;

  int steps() const { return tracks.empty() ? 0 : static_cast<int>(tracks.front().size()); }
};

// Rolling buffer of snapshots feeding the predictors.
class TrafficHistory {
 public:
  explicit TrafficHistory(std::size_t capacity = 64) : capacity_(capacity) {}

  void push(TrafficSnapshot snapshot);
  void push(const World& world) { push(TrafficSnapshot::capture(world)); }
  std::size_t size() const { return frames_.size(); }
  const TrafficSnapshot& latest() const { return frames_.back(); }

  // Window over the vehicles of the latest snapshot. Missing early rows
  // (short history, newly spawned vehicles) replicate the earliest known
  // position, so the result is always full.
  ObservationWindow window(int t_obs, std::optional<int> ego_id) const;

 private:
  std::size_t capacity_;
  std::deque<TrafficSnapshot> frames_;
};

class PredictorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The observation window is not yet full.
class WarmupError : public PredictorError {
 public:
  using PredictorError::PredictorError;
};

// An external predictor did not answer within its deadline.
class DeadlineExceeded : public PredictorError {
 public:
  using PredictorError::PredictorError;
};

// Maps an observation window (and optionally the ego's planned positions) to
// predicted positions of every vehicle. Instances are not shared between
// concurrent callers; use clone() per worker.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string_view name() const = 0;
  virtual int prediction_steps() const = 0;

  // One application of the map: prediction_steps() future positions. The ego
  // row of the result is the supplied plan when given.
  virtual PredictionSheet predict(const ObservationWindow& window,
                                  std::span<const Point2> ego_plan) = 0;

  // Covers `steps` future steps. The default applies predict() recursively,
  // rolling the window forward with its own outputs and the ego plan.
  virtual PredictionSheet predict_horizon(const ObservationWindow& window,
                                          std::span<const VehicleState> ego_plan, int steps);

  // Called once per control step before any prediction.
  virtual void observe(const World& /*world*/) {}

  virtual std::unique_ptr<Predictor> clone() const = 0;
};

class ConstantVelocityPredictor final : public Predictor {
 public:
  explicit ConstantVelocityPredictor(int t_pred = 2) : t_pred_(t_pred) {}

  std::string_view name() const override { return "cv"; }
  int prediction_steps() const override { return t_pred_; }
  PredictionSheet predict(const ObservationWindow& window,
                          std::span<const Point2> ego_plan) override;
  std::unique_ptr<Predictor> clone() const override {
    return std::make_unique<ConstantVelocityPredictor>(*this);
  }

 private:
  int t_pred_;
};

// Perfect predictions: clones the simulator and rolls it forward with the ego
// following the candidate plan.
class GroundTruthPredictor final : public Predictor {
 public:
  explicit GroundTruthPredictor(int t_pred = 2) : t_pred_(t_pred) {}

  std::string_view name() const override { return "oracle"; }
  int prediction_steps() const override { return t_pred_; }
  void observe(const World& world) override { world_ = world; }
  PredictionSheet predict(const ObservationWindow& window,
                          std::span<const Point2> ego_plan) override;
  PredictionSheet predict_horizon(const ObservationWindow& window,
                                  std::span<const VehicleState> ego_plan, int steps) override;
  std::unique_ptr<Predictor> clone() const override {
    return std::make_unique<GroundTruthPredictor>(*this);
  }

 private:
  int t_pred_;
  std::optional<World> world_;
};

struct ExternalPredictorOptions {
  std::string command;  // run through /bin/sh -c
  int t_pred = 2;
  std::chrono::milliseconds deadline{50};
};

// Talks to a child process, one JSON object per line in each direction:
//   request  {"id":n,"t_obs":k,"t_pred":m,"ego_index":e,"vehicles":[[[x,y],..],..],"ego_plan":[[x,y],..]}
//   response {"id":n,"pred":[[[x,y],..],..]}
class ExternalPredictor final : public Predictor {
 public:
  explicit ExternalPredictor(ExternalPredictorOptions options);
  ~ExternalPredictor() override;
  ExternalPredictor(const ExternalPredictor&) = delete;
  ExternalPredictor& operator=(const ExternalPredictor&) = delete;

  std::string_view name() const override { return "external"; }
  int prediction_steps() const override { return options_.t_pred; }
  PredictionSheet predict(const ObservationWindow& window,
                          std::span<const Point2> ego_plan) override;
  std::unique_ptr<Predictor> clone() const override;

 private:
  struct Process;
  ExternalPredictorOptions options_;
  std::unique_ptr<Process> process_;
  std::uint64_t next_request_ = 0;
};

enum class PredictorKind { kConstantVelocity, kGroundTruth, kExternal };

std::string_view to_string(PredictorKind kind);
std::optional<PredictorKind> parse_predictor_kind(std::string_view text);

// JSON encoding of the adapter wire format.
std::string encode_request(const ObservationWindow& window, std::span<const Point2> ego_plan,
                           int t_pred, std::uint64_t id);
PredictionSheet decode_response(std::string_view line, const ObservationWindow& window,
                                int t_pred, std::uint64_t* id = nullptr);

// ---------------------------------------------------------------------------
// Training data

struct TrainingWindow {
  int window_id = 0;
  std::vector<int> vehicle_ids;
  std::vector<std::vector<Point2>> obs;   // t_obs rows per vehicle
  std::vector<std::vector<Point2>> pred;  // t_pred rows per vehicle
};

// Sliding windows of (t_obs observed, t_pred target) positions over an
// episode. Only vehicles present for the whole window are included. Noise is
// uniform on [-noise_amplitude, noise_amplitude] and is added to observed
// positions only.
std::vector<TrainingWindow> make_training_windows(std::span<const TrafficSnapshot> episode,
                                                  int t_obs, int t_pred, double noise_amplitude,
                                                  std::uint64_t seed, int first_window_id = 0);

// CSV columns window_id,vehicle_id,step_index,role,x,y with role in {obs,pred}.
void write_training_csv(const std::filesystem::path& path, std::span<const TrainingWindow> windows,
                        bool append = false);
std::vector<TrainingWindow> read_training_csv(const std::filesystem::path& path);

// Convenience: make_training_windows + write_training_csv. Returns the number
// of windows written.
std::size_t export_training_batch(std::span<const TrafficSnapshot> episode,
                                  const std::filesystem::path& path, int t_obs, int t_pred,
                                  double noise_amplitude, std::uint64_t seed,
                                  int first_window_id = 0, bool append = false);

struct DisplacementError {
  double ade = 0.0;
  double fde = 0.0;
};

// Mean Euclidean error over all vehicles and steps, and at the last step.
DisplacementError ade_fde(const PredictionSheet& predicted, const PredictionSheet& truth);

}  // namespace lanemerge
