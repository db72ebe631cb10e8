#pragma once

// Shared helpers for the experiment-level tests: small configs and
// directory utilities.

#include "hmac/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

namespace harness {

namespace fs = std::filesystem;

inline fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hmac_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

/// Relative path -> file bytes for every regular file under root.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

inline std::string default_config_path() { return std::string(HMAC_SOURCE_DIR) + "/configs/default.json"; }

inline nlohmann::json default_config_json() {
  return nlohmann::json::parse(read_file(default_config_path()));
}

/// The default scenario shrunk for unit tests: shorter collection, fewer
/// epochs, short flights.
inline nlohmann::json small_config_json(int outer_iters = 1) {
  nlohmann::json j = default_config_json();
  j["collection"]["duration_s"] = 20.0;
  j["training"]["outer_iters"] = outer_iters;
  j["training"]["daiml"]["n_warmup_epochs"] = 20;
  j["training"]["daiml"]["epochs_per_round"] = 2;
  for (auto& s : j["flight"]["scenarios"]) s["duration_s"] = 10.0;
  j["flight"]["psd_segment"] = 256;
  j["seeds"] = {1, 2};
  return j;
}

inline hmac::experiment::ExperimentConfig parse(const nlohmann::json& j) {
  return hmac::experiment::parse_config(j.dump());
}

}  // namespace harness
