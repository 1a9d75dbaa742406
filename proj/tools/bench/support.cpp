// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <atomic>
#include <boost/version.hpp>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <thread>

#include "pgf/kernels.hpp"

#ifndef PGF_VERSION
#define PGF_VERSION "0.0.0"
#endif

namespace pgf::bench {

using nlohmann::json;

json default_config() {
  return json{
      {"seed", 1234},
      {"precision", "f64"},
      {"threads", 1},
      {"block_size", 256},

      {"verify.lengths", {128, 512, 2048, 8192}},
      {"verify.channels", {2, 4}},
      {"verify.states", {4, 16}},
      {"verify.seeds", 5},
      {"verify.fd_eps", 1e-5},
      {"verify.tol_unrolled", 1e-12},
      {"verify.tol_fd", 1e-5},
      {"verify.tol_unrolled_f32", 1e-4},
      {"verify.tol_fd_f32", 1e-4},

      {"invariance.min_length", 100},
      {"invariance.max_length", 100000},
      {"invariance.count", 30},
      {"invariance.channels", 4},
      {"invariance.states", 8},
      {"invariance.alpha", 0.05},

      {"ghost.length", 128000},
      {"ghost.pulse_step", 100000},
      {"ghost.eps", 1e-6},
      {"ghost.channels", 4},
      {"ghost.states", 8},
      {"ghost.window", 128},

      {"stiffness.log_decays", {-8.0, -7.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0}},
      {"stiffness.length", 4096},
      {"stiffness.channels", 4},
      {"stiffness.states", 8},
      {"stiffness.tol", 1e-6},

      {"memory.pgf_lengths", {10000, 20000, 40000}},
      {"memory.unrolled_lengths", {1000, 2000, 4000}},
      {"memory.channels", 16},
      {"memory.states", 16},

      {"complexity.states", {8, 16, 32, 64}},
      {"complexity.rtrl_length", 256},
      {"complexity.pgf_length", 4096},
      {"complexity.pgf_channels", 1},
      {"complexity.repeats", 3},
      {"complexity.min_rtrl_slope", 2.5},
      {"complexity.max_pgf_slope", 1.3},

      {"hessian.length", 256},
      {"hessian.channels", 3},
      {"hessian.states", 4},
      {"hessian.seeds", 2},
      {"hessian.fd_eps", 1e-5},
      {"hessian.tol_fd", 1e-4},
      {"hessian.tol_symmetry", 1e-12},

      {"params.length", 128},
      {"params.channels", 2},
      {"params.states", 4},
      {"params.seeds", 2},
      {"params.fd_eps", 1e-5},
      {"params.tol_fd", 1e-5},
      {"params.block_size", 16},
      {"params.tol_block", 1e-12},

      {"jvp.states", 8},
      {"jvp.activation", "silu"},
      {"jvp.discretization", "zoh"},
      {"jvp.selective_b", true},
  };
}

json load_config(const std::string& path) {
  json config = default_config();
  if (path.empty()) return config;
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path);
  json user;
  try {
    user = json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error("config: " + path + ": " + e.what());
  }
  if (!user.is_object()) throw Error("config: " + path + " must hold a flat JSON object");
  for (const auto& [key, value] : user.items()) {
    if (!config.contains(key)) throw Error("config: unknown key '" + key + "'");
    const auto& def = config[key];
    const bool both_numbers = def.is_number() && value.is_number();
    if (def.type() != value.type() && !both_numbers) {
      throw Error("config: key '" + key + "' expects " + std::string(def.type_name()) + ", got " +
                  value.type_name());
    }
    config[key] = value;
  }
  return config;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string RunContext::path(const std::string& file) const {
  return (std::filesystem::path(out_dir) / file).string();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, std::vector<std::string> header)
    : os_(path, std::ios::binary), columns_(header.size()) {
  if (!os_) throw Error("csv: cannot open " + path);
  for (const auto& h : header) cell(h);
  end_row();
}

void CsvWriter::cell(const std::string& s) {
  if (filled_ > 0) os_ << ',';
  os_ << s;
  ++filled_;
}

CsvWriter& CsvWriter::operator<<(double v) {
  cell(format_double(v));
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::size_t v) {
  cell(std::to_string(v));
  return *this;
}

CsvWriter& CsvWriter::operator<<(int v) {
  cell(std::to_string(v));
  return *this;
}

CsvWriter& CsvWriter::operator<<(bool v) {
  cell(v ? "true" : "false");
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
  cell(v);
  return *this;
}

void CsvWriter::end_row() {
  if (filled_ != columns_) {
    throw Error("csv: row has " + std::to_string(filled_) + " cells, header has " + std::to_string(columns_));
  }
  os_ << '\n';
  filled_ = 0;
}

void write_manifest(const RunContext& ctx, const CommandResult& result) {
  json m;
  m["command"] = ctx.command;
  m["config"] = ctx.config;
  m["config_hash"] = config_hash(ctx.config);
  m["seed"] = ctx.seed;
  m["precision"] = to_string(ctx.precision);
  m["threads"] = ctx.threads;
  m["isa"] = std::string(kernels::to_string(kernels::active_isa()));
  m["versions"] = {{"pgf", PGF_VERSION},
                   {"compiler", __VERSION__},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"boost", BOOST_LIB_VERSION}};
  m["outputs"] = result.outputs;
  m["timing_outputs"] = result.timing_outputs;
  m["summary"] = result.summary;
  m["status"] = result.pass ? "pass" : "fail";
  std::ofstream os(ctx.path("manifest.json"), std::ios::binary);
  if (!os) throw Error("manifest: cannot write " + ctx.path("manifest.json"));
  os << m.dump(2) << '\n';
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(threads, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace pgf::bench
