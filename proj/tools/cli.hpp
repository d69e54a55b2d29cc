#pragma once

// Command-line front end: synth, ingest, fit, encode, reconstruct, bench.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace kcsc::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kDivergence = 4 };

/// Record written next to every command's output.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();  ///< option name -> resolved value
  std::string config_toml;                           ///< same, loadable with --config
  std::uint64_t seed = 0;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();  ///< seconds per phase
  nlohmann::json metrics = nlohmann::json::array();   ///< one object per result row
  nlohmann::json summary = nlohmann::json::object();  ///< run-level figures

  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Parses and runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kcsc::cli
