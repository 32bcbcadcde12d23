#pragma once

// Merged run configuration. Every field has a default; a flat `key = value`
// file overrides defaults and command-line flags override the file.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dnncal/calibration.hpp"
#include "dnncal/discrepancy.hpp"

namespace dnncal {

struct RunConfig {
  NetworkConfig network;
  TrainingConfig training;
  DiscrepancyRanges ranges;
  std::size_t n_runs = 200;
  std::size_t n_scenarios = 1500;
  std::size_t series_length = 480;
  std::uint64_t seed = 1;
  std::vector<Interval> box;  // declared parameter box; empty means infer
  std::string method = "quantile";

  std::filesystem::path out = ".";
  std::filesystem::path ensemble;
  std::filesystem::path contaminated;
  std::filesystem::path observation;
  std::filesystem::path scenarios;
  std::filesystem::path model;

  /// Sets one field from its textual form; UsageError on unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies every `key = value` line; `#` starts a comment.
  void apply_text(std::string_view text, const std::string& source = "<config>");
  void apply_file(const std::filesystem::path& path);

  /// One `key = value` line per field, in key order; parses back to an equal config.
  std::string to_text() const;
};

/// Defaults, then `file` (when non-empty), then each (key, value) flag in order.
RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& flags);

struct ConfigKey {
  std::string name;
  std::string help;
};

/// All recognised keys.
const std::vector<ConfigKey>& config_keys();

}  // namespace dnncal
