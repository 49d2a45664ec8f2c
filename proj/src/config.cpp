#include "lanemerge/config.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "json.hpp"

namespace lanemerge {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

// String-valued field with its own codec.
struct EnumSlot {
  std::function<std::string()> get;
  std::function<bool(const std::string&)> set;
  std::string choices;
};

using Slot = std::variant<double*, int*, bool*, std::uint64_t*, std::string*, Range*, EnumSlot>;

struct Field {
  const char* section;
  const char* key;
  Slot slot;
};

std::vector<Field> fields(Config& c) {
  ControllerConfig& k = c.sim.controller;
  TrafficConfig& t = c.sim.traffic;
  DriverParamRanges& r = t.ranges;
  ScenarioConfig& s = c.sim.scenario;
  PredictorConfig& p = c.sim.predictor;
  HarnessConfig& h = c.harness;

  EnumSlot sampling{
      [&k] { return std::string(k.sampling == CandidateSampling::kIid ? "iid" : "hold_first"); },
      [&k](const std::string& v) {
        if (v == "iid") k.sampling = CandidateSampling::kIid;
        else if (v == "hold_first") k.sampling = CandidateSampling::kHoldFirst;
        else return false;
        return true;
      },
      "iid|hold_first"};
  EnumSlot fallback{
      [&k] { return std::string(k.fallback == FallbackPolicy::kBrake ? "brake" : "longest_prefix"); },
      [&k](const std::string& v) {
        if (v == "brake") k.fallback = FallbackPolicy::kBrake;
        else if (v == "longest_prefix") k.fallback = FallbackPolicy::kLongestPrefix;
        else return false;
        return true;
      },
      "brake|longest_prefix"};
  EnumSlot kind{[&p] { return std::string(to_string(p.kind)); },
                [&p](const std::string& v) {
                  auto parsed = parse_predictor_kind(v);
                  if (parsed) p.kind = *parsed;
                  return parsed.has_value();
                },
                "cv|oracle|external"};
  EnumSlot regime{[&h] { return std::string(to_string(h.regime)); },
                  [&h](const std::string& v) {
                    auto parsed = parse_regime(v);
                    if (parsed) h.regime = *parsed;
                    return parsed.has_value();
                  },
                  "coop|mixed|agg"};

  return {
      {"controller", "T", &k.T},
      {"controller", "N_sim", &k.N_sim},
      {"controller", "dt", &k.dt},
      {"controller", "lambda_div", &k.lambda_div},
      {"controller", "lambda_v", &k.lambda_v},
      {"controller", "lambda_delta", &k.lambda_delta},
      {"controller", "lambda_a", &k.lambda_a},
      {"controller", "lambda_Delta_delta", &k.lambda_Delta_delta},
      {"controller", "lambda_Delta_a", &k.lambda_Delta_a},
      {"controller", "delta_min", &k.delta_min},
      {"controller", "delta_max", &k.delta_max},
      {"controller", "a_min", &k.a_min},
      {"controller", "a_max", &k.a_max},
      {"controller", "x_end", &k.x_end},
      {"controller", "v_ref", &k.v_ref},
      {"controller", "epsilon", &k.epsilon},
      {"controller", "alpha", &k.alpha},
      {"controller", "capture_y", &k.capture_y},
      {"controller", "capture_psi", &k.capture_psi},
      {"controller", "min_div_distance", &k.min_div_distance},
      {"controller", "mode_preview", &k.mode_preview},
      {"controller", "sampling", sampling},
      {"controller", "terminal_braking", &k.terminal_braking},
      {"controller", "warm_start", &k.warm_start},
      {"controller", "mode_escape", &k.mode_escape},
      {"controller", "fallback", fallback},
      {"controller", "workers", &k.workers},

      {"driver_model", "v_ref", &r.v_ref},
      {"driver_model", "T", &r.T_headway},
      {"driver_model", "a_max", &r.a_max},
      {"driver_model", "b", &r.b_comf},
      {"driver_model", "delta", &r.delta_exp},
      {"driver_model", "s0", &r.s0},
      {"driver_model", "eta_c", &r.eta_c},
      {"driver_model", "eta_p", &r.eta_p},
      {"driver_model", "w", &r.geom.w},
      {"driver_model", "h", &r.geom.h},
      {"driver_model", "l_f", &r.geom.l_f},
      {"driver_model", "l_r", &r.geom.l_r},
      {"driver_model", "politeness", &t.mobil.politeness},
      {"driver_model", "a_threshold", &t.mobil.a_threshold},
      {"driver_model", "b_safe", &t.mobil.b_safe},
      {"driver_model", "mobil_enabled", &t.mobil_enabled},
      {"driver_model", "mobil_cooldown_steps", &t.mobil_cooldown_steps},
      {"driver_model", "idm_substeps", &t.idm_substeps},
      {"driver_model", "zone_a_extra", &t.zones.a_extra},
      {"driver_model", "zone_b_length", &t.zones.b_length},
      {"driver_model", "zone_b_width", &t.zones.b_width},
      {"driver_model", "k_lateral", &t.steering.k_lateral},
      {"driver_model", "k_heading", &t.steering.k_heading},
      {"driver_model", "steer_limit", &t.steering.limit},
      {"driver_model", "noise", &t.noise.enabled},
      {"driver_model", "accel_noise", &t.noise.accel_amplitude},
      {"driver_model", "lateral_noise", &t.noise.lateral_amplitude},
      {"driver_model", "lateral_period", &t.noise.lateral_period},
      {"driver_model", "lookahead", &t.lookahead},
      {"driver_model", "head_x", &t.head_x},
      {"driver_model", "spawn_x", &t.spawn_x},
      {"driver_model", "despawn_x", &t.despawn_x},

      {"scenario", "lane_count", &s.lane_count},
      {"scenario", "ego_lane", &s.ego_lane},
      {"scenario", "target_lane", &s.target_lane},
      {"scenario", "ego_x", &s.ego_x},
      {"scenario", "ego_v", &s.ego_v},
      {"scenario", "stopped_offset", &s.stopped_offset},
      {"scenario", "warmup", &s.warmup},
      {"scenario", "capture_steps", &s.capture_steps},
      {"scenario", "placement_retries", &s.placement_retries},

      {"predictor", "kind", kind},
      {"predictor", "T_obs", &p.t_obs},
      {"predictor", "T_pred", &p.t_pred},
      {"predictor", "command", &p.command},
      {"predictor", "deadline_ms", &p.deadline_ms},

      {"harness", "regime", regime},
      {"harness", "seed", &h.seed},
      {"harness", "episodes", &h.episodes},
      {"harness", "lane_width", &s.lane_width},
      {"harness", "time_limit", &s.time_limit},
      {"harness", "workers", &h.workers},
  };
}

void read_field(const json& value, const Field& f, std::vector<std::string>& errors) {
  const std::string name = std::string(f.section) + "." + f.key;
  auto fail = [&](const char* expected) { errors.push_back(name + ": expected " + expected); };
  std::visit(
      [&](auto&& slot) {
        using T = std::decay_t<decltype(slot)>;
        if constexpr (std::is_same_v<T, double*>) {
          if (!value.is_number()) return fail("a number");
          *slot = value.get<double>();
        } else if constexpr (std::is_same_v<T, int*>) {
          if (!value.is_number_integer()) return fail("an integer");
          *slot = value.get<int>();
        } else if constexpr (std::is_same_v<T, std::uint64_t*>) {
          if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
            return fail("a non-negative integer");
          }
          *slot = value.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, bool*>) {
          if (!value.is_boolean()) return fail("true or false");
          *slot = value.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string*>) {
          if (!value.is_string()) return fail("a string");
          *slot = value.get<std::string>();
        } else if constexpr (std::is_same_v<T, Range*>) {
          if (value.is_number()) {
            slot->lo = slot->hi = value.get<double>();
          } else if (value.is_array() && value.size() == 2 && value[0].is_number() &&
                     value[1].is_number()) {
            slot->lo = value[0].get<double>();
            slot->hi = value[1].get<double>();
          } else {
            return fail("[lo, hi] or a number");
          }
        } else {
          if (!value.is_string() || !slot.set(value.get<std::string>())) {
            return fail(slot.choices.c_str());
          }
        }
      },
      f.slot);
}

json write_field(const Field& f) {
  return std::visit(
      [](auto&& slot) -> json {
        using T = std::decay_t<decltype(slot)>;
        if constexpr (std::is_same_v<T, Range*>) {
          return json::array({slot->lo, slot->hi});
        } else if constexpr (std::is_same_v<T, EnumSlot>) {
          return slot.get();
        } else {
          return *slot;
        }
      },
      f.slot);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

Config parse_config(std::string_view text, std::vector<std::string>* warnings) {
  json doc;
  bool blank = text.find_first_not_of(" \t\r\n") == std::string_view::npos;
  if (!blank) {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError({std::string("parse error: ") + e.what()});
    }
  } else {
    doc = json::object();
  }
  if (!doc.is_object()) throw ConfigError({"top level must be an object"});
  if (doc.contains("manifest_version") && doc.contains("config")) doc = doc["config"];

  Config config;
  std::vector<std::string> errors;
  std::vector<std::string> notes;
  auto table = fields(config);
  std::map<std::string, std::set<std::string>> known;
  for (const Field& f : table) known[f.section].insert(f.key);

  for (const auto& [section, body] : doc.items()) {
    if (!known.count(section)) {
      notes.push_back("unknown section '" + section + "' ignored");
      continue;
    }
    if (!body.is_object()) {
      errors.push_back(section + ": expected an object");
      continue;
    }
    for (const auto& [key, value] : body.items()) {
      if (!known[section].count(key)) notes.push_back("unknown key '" + section + "." + key + "' ignored");
    }
  }
  for (const Field& f : table) {
    auto sec = doc.find(f.section);
    if (sec == doc.end() || !sec->is_object()) continue;
    auto it = sec->find(f.key);
    if (it != sec->end()) read_field(*it, f, errors);
  }
  config.sim.traffic.dt = config.sim.controller.dt;
  if (errors.empty()) errors = validate(config);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  if (warnings != nullptr) *warnings = std::move(notes);
  return config;
}

Config load_config(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), warnings);
}

std::vector<std::string> validate(const Config& config) {
  std::vector<std::string> errors;
  for (auto& e : config.sim.controller.validate()) errors.push_back("controller." + e);

  const TrafficConfig& t = config.sim.traffic;
  const DriverParamRanges& r = t.ranges;
  auto range = [&](const Range& x, const char* name, double floor) {
    if (!(x.lo <= x.hi)) {
      errors.push_back(std::string("driver_model.") + name + ": lower bound exceeds upper bound");
    }
    if (!(x.lo >= floor)) {
      errors.push_back(std::string("driver_model.") + name + ": lower bound below " +
                       std::to_string(floor));
    }
  };
  range(r.v_ref, "v_ref", 1e-6);
  range(r.T_headway, "T", 0.0);
  range(r.a_max, "a_max", 1e-6);
  range(r.b_comf, "b", 1e-6);
  range(r.delta_exp, "delta", 1e-6);
  range(r.s0, "s0", 0.0);
  range(r.eta_c, "eta_c", 0.0);
  range(r.eta_p, "eta_p", -1e9);
  if (r.eta_c.hi > 1.0) errors.push_back("driver_model.eta_c: upper bound above 1");
  if (!r.geom.valid()) {
    errors.push_back("driver_model.w/h/l_f/l_r: need positive axle lengths and h > w > 0");
  }
  if (!(t.mobil.politeness >= 0.0)) errors.push_back("driver_model.politeness must be >= 0");
  if (!(t.mobil.b_safe > 0.0)) errors.push_back("driver_model.b_safe must be > 0");
  if (t.mobil_cooldown_steps < 0) errors.push_back("driver_model.mobil_cooldown_steps must be >= 0");
  if (t.idm_substeps < 1) errors.push_back("driver_model.idm_substeps must be >= 1");
  if (!(t.zones.b_length > 0.0)) errors.push_back("driver_model.zone_b_length must be > 0");
  if (!(t.zones.b_width >= 0.0)) errors.push_back("driver_model.zone_b_width must be >= 0");
  if (!(t.noise.lateral_period > 0.0)) errors.push_back("driver_model.lateral_period must be > 0");
  if (!(t.spawn_x < t.head_x && t.head_x < t.despawn_x)) {
    errors.push_back("driver_model.spawn_x < head_x < despawn_x is required");
  }
  if (!(t.lookahead > 0.0)) errors.push_back("driver_model.lookahead must be > 0");

  const ScenarioConfig& s = config.sim.scenario;
  if (s.lane_count < 2) errors.push_back("scenario.lane_count must be >= 2");
  if (!(s.lane_width > 2.0 * r.geom.w)) errors.push_back("harness.lane_width must exceed the vehicle width");
  if (s.ego_lane < 0 || s.ego_lane >= s.lane_count) errors.push_back("scenario.ego_lane outside the road");
  if (s.target_lane < 0 || s.target_lane >= s.lane_count) {
    errors.push_back("scenario.target_lane outside the road");
  }
  if (!(s.ego_x.lo <= s.ego_x.hi)) errors.push_back("scenario.ego_x: lower bound exceeds upper bound");
  if (!(s.ego_v.lo <= s.ego_v.hi) || s.ego_v.lo < 0.0) {
    errors.push_back("scenario.ego_v: need 0 <= lo <= hi");
  }
  if (!(s.ego_x.hi < config.sim.controller.x_end)) {
    errors.push_back("scenario.ego_x: must start before controller.x_end");
  }
  if (!(s.stopped_offset > 0.0)) errors.push_back("scenario.stopped_offset must be > 0");
  if (!(s.warmup >= 0.0)) errors.push_back("scenario.warmup must be >= 0");
  if (s.capture_steps < 1) errors.push_back("scenario.capture_steps must be >= 1");
  if (s.placement_retries < 1) errors.push_back("scenario.placement_retries must be >= 1");
  if (!(s.time_limit > 0.0)) errors.push_back("harness.time_limit must be > 0");

  const PredictorConfig& p = config.sim.predictor;
  if (p.t_obs < 2) errors.push_back("predictor.T_obs must be >= 2");
  if (p.t_pred < 1) errors.push_back("predictor.T_pred must be >= 1");
  if (!(p.deadline_ms > 0.0)) errors.push_back("predictor.deadline_ms must be > 0");
  if (p.kind == PredictorKind::kExternal && p.command.empty()) {
    errors.push_back("predictor.command is required for the external predictor");
  }

  if (config.harness.episodes < 1) errors.push_back("harness.episodes must be >= 1");
  if (config.harness.workers < 0) errors.push_back("harness.workers must be >= 0");
  return errors;
}

std::string config_to_json(const Config& config, int indent) {
  Config copy = config;
  json doc = json::object();
  for (const Field& f : fields(copy)) doc[f.section][f.key] = write_field(f);
  return doc.dump(indent);
}

std::string_view library_version() { return "0.3.0"; }

RunManifest write_manifest(const Config& config, std::uint64_t seed,
                           const std::filesystem::path& out_dir, std::vector<std::string> outputs) {
  std::filesystem::create_directories(out_dir);
  RunManifest m;
  m.config = config;
  m.config.harness.seed = seed;
  m.seed = seed;
  m.version = std::string(library_version());
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  m.created_utc = stamp;
  m.out_dir = out_dir;
  m.outputs = std::move(outputs);

  json doc = {{"manifest_version", 1},
              {"version", m.version},
              {"created_utc", m.created_utc},
              {"seed", seed},
              {"regime", to_string(m.config.harness.regime)},
              {"predictor", to_string(m.config.sim.predictor.kind)},
              {"outputs", m.outputs},
              {"config", json::parse(config_to_json(m.config, -1))}};
  const auto path = out_dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
  return m;
}

int resolve_workers(int configured) {
  if (const char* env = std::getenv("LANEMERGE_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  if (configured >= 1) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace lanemerge
