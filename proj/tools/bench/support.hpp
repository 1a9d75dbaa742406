// SPDX-License-Identifier: Apache-2.0
//
// Shared plumbing for the benchmark commands: flat JSON config, CSV writer,
// run manifest, and an index-ordered worker pool.
#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pgf/common.hpp"

namespace pgf::bench {

/// Every key with its default. Nothing is read from a config that is not listed here.
nlohmann::json default_config();

/// Defaults overlaid with the file at `path` (unknown keys and type changes are errors).
nlohmann::json load_config(const std::string& path);

/// FNV-1a 64 over the compact dump of `config`, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct RunContext {
  std::string command;
  nlohmann::json config;
  std::string out_dir;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::size_t threads = 1;

  std::string path(const std::string& file) const;

  template <typename T>
  T get(const std::string& key) const {
    return config.at(key).get<T>();
  }
};

/// Comma-separated rows with a fixed header. Doubles use %.17g so every value
/// round-trips and reruns compare byte for byte.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::vector<std::string> header);

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(std::size_t v);
  CsvWriter& operator<<(int v);
  CsvWriter& operator<<(bool v);
  CsvWriter& operator<<(const std::string& v);
  CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
  /// Ends the current row; throws if the column count differs from the header.
  void end_row();

 private:
  void cell(const std::string& s);

  std::ofstream os_;
  std::size_t columns_;
  std::size_t filled_ = 0;
};

std::string format_double(double v);

/// Outcome of one command. `breaches` lists offending rows for stderr.
struct CommandResult {
  bool pass = true;
  std::vector<std::string> outputs;         // deterministic files
  std::vector<std::string> timing_outputs;  // wall-clock files, excluded from reproducibility
  std::vector<std::string> breaches;
  nlohmann::json summary = nlohmann::json::object();
};

/// Writes manifest.json for the run. Contains no timestamps.
void write_manifest(const RunContext& ctx, const CommandResult& result);

/// Runs fn(i) for i in [0, n) on `threads` workers. Results are addressed by
/// index, so output order does not depend on scheduling. The first exception
/// (lowest index) is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace pgf::bench
