#include "copydst/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace copydst {

using ordered_json = nlohmann::ordered_json;

void write_manifest(const RunManifest& manifest, const std::string& output_path) {
  ordered_json j;
  j["command"] = manifest.command;
  j["argv"] = manifest.argv;
  if (!manifest.config_json.empty()) {
    try {
      j["config"] = ordered_json::parse(manifest.config_json);
    } catch (const std::exception&) {
      j["config"] = manifest.config_json;
    }
  }
  j["seed"] = manifest.seed;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["git_describe"] = manifest.git_describe;
  j["wall_time_s"] = manifest.wall_time_s;
  if (!manifest.extras_json.empty()) {
    try {
      j["extras"] = ordered_json::parse(manifest.extras_json);
    } catch (const std::exception&) {
      j["extras"] = manifest.extras_json;
    }
  }
  const std::string path = output_path + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace copydst
