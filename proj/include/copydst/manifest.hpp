#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace copydst {

// One manifest per command invocation, written next to the main output as
// <output>.manifest.json. Evaluation reports stay byte-reproducible; wall
// time and other run-varying facts live here instead.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_json;  // config snapshot, empty when not applicable
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string git_describe;
  double wall_time_s = 0.0;
  std::string extras_json;  // command-specific facts, JSON object text
};

void write_manifest(const RunManifest& manifest, const std::string& output_path);

}  // namespace copydst
