#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace xvd::cli {

std::string sha256_hex(std::string_view data);

// Everything needed to re-run a command and check that it reproduced the same bytes.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // path ("-" for stdout), sha256
  std::string version;

  void add_input(const std::string& path, std::string_view content) { inputs.emplace_back(path, sha256_hex(content)); }
  void add_output(const std::string& path, std::string_view content) { outputs.emplace_back(path, sha256_hex(content)); }

  nlohmann::json to_json() const;
};

}  // namespace xvd::cli
