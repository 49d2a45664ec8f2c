#include "lanemerge/predictors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace lanemerge {

using nlohmann::json;

TrafficSnapshot TrafficSnapshot::capture(const World& world) {
  TrafficSnapshot snap;
  snap.time = world.time();
  snap.ids.reserve(world.vehicles().size());
  snap.states.reserve(world.vehicles().size());
  for (const Vehicle& v : world.vehicles()) {
    snap.ids.push_back(v.id);
    snap.states.push_back(v.state);
  }
  return snap;
}

std::optional<VehicleState> TrafficSnapshot::state_of(int id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return states[i];
  }
  return std::nullopt;
}

bool ObservationWindow::full() const {
  if (t_obs < 2 || tracks.size() != ids.size()) return false;
  return std::all_of(tracks.begin(), tracks.end(),
                     [&](const auto& t) { return static_cast<int>(t.size()) == t_obs; });
}

void TrafficHistory::push(TrafficSnapshot snapshot) {
  frames_.push_back(std::move(snapshot));
  while (frames_.size() > capacity_) frames_.pop_front();
}

ObservationWindow TrafficHistory::window(int t_obs, std::optional<int> ego_id) const {
  ObservationWindow w;
  w.t_obs = t_obs;
  if (frames_.empty()) return w;
  const TrafficSnapshot& last = frames_.back();
  const std::size_t first =
      frames_.size() > static_cast<std::size_t>(t_obs) ? frames_.size() - t_obs : 0;
  w.ids = last.ids;
  w.tracks.resize(last.ids.size());
  for (std::size_t i = 0; i < last.ids.size(); ++i) {
    const int id = last.ids[i];
    if (ego_id && id == *ego_id) w.ego_index = static_cast<int>(i);
    std::vector<Point2>& track = w.tracks[i];
    for (std::size_t f = first; f < frames_.size(); ++f) {
      if (auto s = frames_[f].state_of(id)) track.push_back({s->x, s->y});
    }
    const Point2 earliest = track.front();
    track.insert(track.begin(), static_cast<std::size_t>(t_obs) - track.size(), earliest);
  }
  return w;
}

// ---------------------------------------------------------------------------

PredictionSheet Predictor::predict_horizon(const ObservationWindow& window,
                                           std::span<const VehicleState> ego_plan, int steps) {
  if (!window.full()) throw WarmupError("observation window is not full");
  std::vector<Point2> plan;
  plan.reserve(ego_plan.size());
  for (const VehicleState& s : ego_plan) plan.push_back({s.x, s.y});

  PredictionSheet out;
  out.ids = window.ids;
  out.tracks.resize(window.ids.size());
  ObservationWindow rolling = window;
  const int per_call = prediction_steps();
  int done = 0;
  while (done < steps) {
    const int n = std::min(per_call, steps - done);
    std::span<const Point2> chunk;
    if (static_cast<std::size_t>(done) < plan.size()) {
      chunk = std::span<const Point2>(plan).subspan(
          done, std::min<std::size_t>(per_call, plan.size() - done));
    }
    const PredictionSheet part = predict(rolling, chunk);
    for (std::size_t i = 0; i < out.tracks.size(); ++i) {
      const auto& src = part.tracks[i];
      out.tracks[i].insert(out.tracks[i].end(), src.begin(), src.begin() + n);
      auto& track = rolling.tracks[i];
      track.erase(track.begin(), track.begin() + std::min<std::ptrdiff_t>(n, track.size()));
      track.insert(track.end(), src.begin(), src.begin() + n);
      while (static_cast<int>(track.size()) > rolling.t_obs) track.erase(track.begin());
    }
    done += n;
  }
  return out;
}

PredictionSheet ConstantVelocityPredictor::predict(const ObservationWindow& window,
                                                   std::span<const Point2> ego_plan) {
  if (!window.full()) throw WarmupError("observation window is not full");
  if (static_cast<int>(ego_plan.size()) > t_pred_) {
    throw std::invalid_argument("ego plan longer than the prediction horizon");
  }
  PredictionSheet sheet;
  sheet.ids = window.ids;
  sheet.tracks.resize(window.ids.size());
  for (std::size_t i = 0; i < window.tracks.size(); ++i) {
    const auto& track = window.tracks[i];
    const Point2 last = track.back();
    const Point2 prev = track[track.size() - 2];
    const double dx = last.x - prev.x;
    const double dy = last.y - prev.y;
    auto& out = sheet.tracks[i];
    out.reserve(t_pred_);
    for (int k = 1; k <= t_pred_; ++k) out.push_back({last.x + k * dx, last.y + k * dy});
    if (static_cast<int>(i) == window.ego_index) {
      std::copy(ego_plan.begin(), ego_plan.end(), out.begin());
    }
  }
  return sheet;
}

PredictionSheet GroundTruthPredictor::predict(const ObservationWindow& window,
                                              std::span<const Point2> ego_plan) {
  if (!world_) throw PredictorError("ground-truth predictor has not observed a world");
  if (static_cast<int>(ego_plan.size()) > t_pred_) {
    throw std::invalid_argument("ego plan longer than the prediction horizon");
  }
  std::vector<VehicleState> states;
  if (world_->ego_id()) {
    VehicleState prev = world_->ego().state;
    const double dt = world_->config().dt;
    for (const Point2& p : ego_plan) {
      VehicleState s = prev;
      const double dx = p.x - prev.x;
      const double dy = p.y - prev.y;
      s.x = p.x;
      s.y = p.y;
      if (std::hypot(dx, dy) > 1e-9) s.psi = std::atan2(dy, dx);
      s.v = std::hypot(dx, dy) / dt;
      states.push_back(s);
      prev = s;
    }
  }
  return predict_horizon(window, states, t_pred_);
}

PredictionSheet GroundTruthPredictor::predict_horizon(const ObservationWindow& window,
                                                      std::span<const VehicleState> ego_plan,
                                                      int steps) {
  if (!world_) throw PredictorError("ground-truth predictor has not observed a world");
  if (!window.full()) throw WarmupError("observation window is not full");

  World sim = *world_;
  const bool has_ego = sim.ego_id().has_value();
  PredictionSheet out;
  out.ids = window.ids;
  out.tracks.assign(window.ids.size(), {});
  std::vector<Point2> last;
  last.reserve(window.tracks.size());
  for (const auto& t : window.tracks) last.push_back(t.back());
  for (auto& t : out.tracks) t.reserve(steps);

  for (int k = 0; k < steps; ++k) {
    if (!has_ego) {
      sim.step_without_ego();
    } else if (static_cast<std::size_t>(k) < ego_plan.size()) {
      sim.step_with_ego_state(ego_plan[k]);
    } else {
      sim.step(ControlInput{});
    }
    // Vehicle order in the world is stable, so walk both lists together.
    const auto vehicles = sim.vehicles();
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
      const int id = out.ids[i];
      std::size_t probe = cursor;
      while (probe < vehicles.size() && vehicles[probe].id != id) ++probe;
      if (probe == vehicles.size()) {
        probe = 0;
        while (probe < vehicles.size() && vehicles[probe].id != id) ++probe;
      }
      if (probe < vehicles.size()) {
        last[i] = {vehicles[probe].state.x, vehicles[probe].state.y};
        cursor = probe + 1;
      }
      out.tracks[i].push_back(last[i]);
    }
  }
  return out;
}

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::kConstantVelocity:
      return "cv";
    case PredictorKind::kGroundTruth:
      return "oracle";
    case PredictorKind::kExternal:
      return "external";
  }
  return "unknown";
}

std::optional<PredictorKind> parse_predictor_kind(std::string_view text) {
  if (text == "cv") return PredictorKind::kConstantVelocity;
  if (text == "oracle") return PredictorKind::kGroundTruth;
  if (text == "external") return PredictorKind::kExternal;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string encode_request(const ObservationWindow& window, std::span<const Point2> ego_plan,
                           int t_pred, std::uint64_t id) {
  json vehicles = json::array();
  for (const auto& track : window.tracks) {
    json rows = json::array();
    for (const Point2& p : track) rows.push_back({p.x, p.y});
    vehicles.push_back(std::move(rows));
  }
  json plan = json::array();
  for (const Point2& p : ego_plan) plan.push_back({p.x, p.y});
  json request = {{"id", id},
                  {"t_obs", window.t_obs},
                  {"t_pred", t_pred},
                  {"ego_index", window.ego_index},
                  {"vehicles", std::move(vehicles)},
                  {"ego_plan", std::move(plan)}};
  return request.dump();
}

PredictionSheet decode_response(std::string_view line, const ObservationWindow& window,
                                int t_pred, std::uint64_t* id) {
  json response;
  try {
    response = json::parse(line);
  } catch (const json::parse_error& e) {
    throw PredictorError(std::string("malformed predictor response: ") + e.what());
  }
  if (!response.is_object()) throw PredictorError("predictor response is not a JSON object");
  if (id != nullptr) {
    const auto it = response.find("id");
    *id = it != response.end() && it->is_number_unsigned() ? it->get<std::uint64_t>() : 0;
  }
  if (!response.contains("pred") || !response["pred"].is_array()) {
    throw PredictorError("predictor response lacks a \"pred\" array");
  }
  const json& pred = response["pred"];
  if (pred.size() != window.ids.size()) {
    throw PredictorError("predictor response has the wrong vehicle count");
  }
  PredictionSheet sheet;
  sheet.ids = window.ids;
  sheet.tracks.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i].is_array() || static_cast<int>(pred[i].size()) != t_pred) {
      throw PredictorError("predictor response has the wrong step count");
    }
    for (const json& p : pred[i]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw PredictorError("predictor response has a malformed point");
      }
      sheet.tracks[i].push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  return sheet;
}

// ---------------------------------------------------------------------------

std::vector<TrainingWindow> make_training_windows(std::span<const TrafficSnapshot> episode,
                                                  int t_obs, int t_pred, double noise_amplitude,
                                                  std::uint64_t seed, int first_window_id) {
  std::vector<TrainingWindow> windows;
  const int span_len = t_obs + t_pred;
  const int count = static_cast<int>(episode.size()) - span_len + 1;
  Rng rng = make_rng(seed, Stream::kExport);
  for (int start = 0; start < count; ++start) {
    TrainingWindow w;
    w.window_id = first_window_id + start;
    for (int id : episode[start + t_obs - 1].ids) {
      std::vector<Point2> rows;
      rows.reserve(span_len);
      for (int f = start; f < start + span_len; ++f) {
        auto s = episode[f].state_of(id);
        if (!s) break;
        rows.push_back({s->x, s->y});
      }
      if (static_cast<int>(rows.size()) != span_len) continue;
      w.vehicle_ids.push_back(id);
      std::vector<Point2> obs(rows.begin(), rows.begin() + t_obs);
      if (noise_amplitude > 0.0) {
        for (Point2& p : obs) {
          p.x += uniform(rng, -noise_amplitude, noise_amplitude);
          p.y += uniform(rng, -noise_amplitude, noise_amplitude);
        }
      }
      w.obs.push_back(std::move(obs));
      w.pred.emplace_back(rows.begin() + t_obs, rows.end());
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

namespace {

void append_number(std::string& out, double value) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, result.ptr);
}

double parse_number(std::string_view text) {
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    throw std::runtime_error("training csv: bad number '" + std::string(text) + "'");
  }
  return value;
}

int parse_int(std::string_view text) {
  int value = 0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    throw std::runtime_error("training csv: bad integer '" + std::string(text) + "'");
  }
  return value;
}

constexpr std::string_view kTrainingHeader = "window_id,vehicle_id,step_index,role,x,y";

}  // namespace

void write_training_csv(const std::filesystem::path& path, std::span<const TrainingWindow> windows,
                        bool append) {
  const bool write_header =
      !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (write_header) out << kTrainingHeader << '\n';
  std::string line;
  for (const TrainingWindow& w : windows) {
    for (std::size_t v = 0; v < w.vehicle_ids.size(); ++v) {
      int step = 0;
      auto emit = [&](const Point2& p, std::string_view role) {
        line.clear();
        line += std::to_string(w.window_id);
        line += ',';
        line += std::to_string(w.vehicle_ids[v]);
        line += ',';
        line += std::to_string(step++);
        line += ',';
        line += role;
        line += ',';
        append_number(line, p.x);
        line += ',';
        append_number(line, p.y);
        line += '\n';
        out << line;
      };
      for (const Point2& p : w.obs[v]) emit(p, "obs");
      for (const Point2& p : w.pred[v]) emit(p, "pred");
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<TrainingWindow> read_training_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TrainingWindow> windows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      if (line != kTrainingHeader) throw std::runtime_error("training csv: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 6) throw std::runtime_error("training csv: expected 6 columns");
    const int window_id = parse_int(fields[0]);
    const int vehicle_id = parse_int(fields[1]);
    const Point2 p{parse_number(fields[4]), parse_number(fields[5])};
    if (windows.empty() || windows.back().window_id != window_id) {
      windows.push_back({});
      windows.back().window_id = window_id;
    }
    TrainingWindow& w = windows.back();
    if (w.vehicle_ids.empty() || w.vehicle_ids.back() != vehicle_id) {
      w.vehicle_ids.push_back(vehicle_id);
      w.obs.emplace_back();
      w.pred.emplace_back();
    }
    if (fields[3] == "obs") {
      w.obs.back().push_back(p);
    } else if (fields[3] == "pred") {
      w.pred.back().push_back(p);
    } else {
      throw std::runtime_error("training csv: unknown role '" + std::string(fields[3]) + "'");
    }
  }
  return windows;
}

std::size_t export_training_batch(std::span<const TrafficSnapshot> episode,
                                  const std::filesystem::path& path, int t_obs, int t_pred,
                                  double noise_amplitude, std::uint64_t seed, int first_window_id,
                                  bool append) {
  const auto windows =
      make_training_windows(episode, t_obs, t_pred, noise_amplitude, seed, first_window_id);
  write_training_csv(path, windows, append);
  return windows.size();
}

DisplacementError ade_fde(const PredictionSheet& predicted, const PredictionSheet& truth) {
  if (predicted.tracks.size() != truth.tracks.size() || predicted.tracks.empty()) {
    throw std::invalid_argument("ade_fde: vehicle counts differ or are zero");
  }
  const int steps = predicted.steps();
  if (steps == 0) throw std::invalid_argument("ade_fde: empty prediction");
  double total = 0.0;
  double final_total = 0.0;
  for (std::size_t i = 0; i < predicted.tracks.size(); ++i) {
    const auto& p = predicted.tracks[i];
    const auto& t = truth.tracks[i];
    if (static_cast<int>(p.size()) != steps || p.size() != t.size()) {
      throw std::invalid_argument("ade_fde: step counts differ");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      total += std::hypot(p[k].x - t[k].x, p[k].y - t[k].y);
    }
    final_total += std::hypot(p.back().x - t.back().x, p.back().y - t.back().y);
  }
  const double n = static_cast<double>(predicted.tracks.size());
  return {total / (n * steps), final_total / n};
}

}  // namespace lanemerge
