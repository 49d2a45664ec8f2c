#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lanemerge/harness.hpp"

namespace lanemerge {

struct HarnessConfig {
  Regime regime = Regime::kMixed;
  std::uint64_t seed = 1;
  int episodes = 100;
  int workers = 0;  // 0 picks the hardware concurrency

  friend bool operator==(const HarnessConfig&, const HarnessConfig&) = default;
};

struct Config {
  SimulationConfig sim;
  HarnessConfig harness;

  friend bool operator==(const Config&, const Config&) = default;
};

// Parse or validation failure. what() joins every message.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

// JSON document with sections controller, driver_model, scenario, predictor
// and harness. Missing keys keep their defaults; unknown keys are reported in
// `warnings`. A run manifest (object with a "config" member) is accepted too.
Config parse_config(std::string_view text, std::vector<std::string>* warnings = nullptr);
Config load_config(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

std::vector<std::string> validate(const Config& config);

// Every field, defaults included.
std::string config_to_json(const Config& config, int indent = 2);

struct RunManifest {
  Config config;
  std::uint64_t seed = 0;
  std::string version;
  std::string created_utc;
  std::filesystem::path out_dir;
  std::vector<std::string> outputs;
};

std::string_view library_version();

// Writes out_dir/manifest.json (creating out_dir) and returns its contents.
RunManifest write_manifest(const Config& config, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           std::vector<std::string> outputs = {});

// Worker count after the LANEMERGE_WORKERS override and the 0 = auto rule.
int resolve_workers(int configured);

}  // namespace lanemerge
