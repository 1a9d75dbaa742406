// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "pgf/hessian.hpp"
#include "pgf/instance.hpp"
#include "pgf/io.hpp"
#include "pgf/numerics.hpp"
#include "pgf/oracle.hpp"
#include "pgf/param_grad.hpp"
#include "pgf/tangent.hpp"
#include "pgf/tose.hpp"

namespace pgf::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string breach(const std::string& what, double value, double tol) {
  return what + ": " + format_double(value) + " exceeds " + format_double(tol);
}

template <Real T>
Tensor<double> streamed_dy(const GlrParams<double>& p, const Tensor<double>& u, const Tensor<double>& du,
                           std::size_t block) {
  const auto pt = p.cast<T>();
  const auto ut = u.cast<T>(), dut = du.cast<T>();
  MemorySource<T> src(ut, dut);
  MemorySink<T> sink(u.dim(0), u.dim(1));
  run_tose<T>(pt, src, sink, BlockPlan::make(u.dim(0), block), nullptr, nullptr, ToseOptions{ScanMode::fold, false});
  return sink.dy.template cast<double>();
}

template <Real T>
Tensor<double> dense_dy(const GlrParams<double>& p, const Tensor<double>& u, const Tensor<double>& du) {
  if constexpr (std::is_same_v<T, double>) {
    return pgf_jvp_dense<double>(p, u, du).dy;
  } else {
    return pgf_jvp_dense<T>(p.cast<T>(), u.cast<T>(), du.cast<T>()).dy.template cast<double>();
  }
}

void require_f64(const RunContext& ctx) {
  if (ctx.precision != Precision::f64) {
    throw Error(ctx.command + " runs in fixed precision; --precision f32 is not supported");
  }
}

std::vector<std::size_t> log_spaced(std::size_t lo, std::size_t hi, std::size_t count) {
  if (count < 2 || lo == 0 || hi <= lo) throw Error("log_spaced: need count >= 2 and 0 < min < max");
  std::vector<std::size_t> out;
  const double step = std::log(double(hi) / double(lo)) / double(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<std::size_t>(std::llround(double(lo) * std::exp(step * double(i))));
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  return out;
}

// verify

struct VerifyRow {
  std::size_t len, d, n;
  std::uint64_t seed;
  double err_unrolled, err_fd;
};

template <Real T>
CommandResult verify_impl(const RunContext& ctx) {
  const auto lengths = ctx.get<std::vector<std::size_t>>("verify.lengths");
  const auto channels = ctx.get<std::vector<std::size_t>>("verify.channels");
  const auto states = ctx.get<std::vector<std::size_t>>("verify.states");
  const auto seeds = ctx.get<std::size_t>("verify.seeds");
  const double eps = ctx.get<double>("verify.fd_eps");
  const bool f32 = std::is_same_v<T, float>;
  const double tol_u = ctx.get<double>(f32 ? "verify.tol_unrolled_f32" : "verify.tol_unrolled");
  const double tol_fd = ctx.get<double>(f32 ? "verify.tol_fd_f32" : "verify.tol_fd");

  std::vector<VerifyRow> rows;
  for (const auto len : lengths) {
    for (const auto d : channels) {
      for (const auto n : states) {
        for (std::size_t s = 0; s < seeds; ++s) rows.push_back({len, d, n, ctx.seed + s, 0.0, 0.0});
      }
    }
  }
  parallel_for(rows.size(), ctx.threads, [&](std::size_t i) {
    auto& r = rows[i];
    const auto p = random_params(r.d, r.n, r.seed);
    const auto u = random_sequence(r.len, r.d, r.seed, 1), du = random_sequence(r.len, r.d, r.seed, 2);
    const auto dy = dense_dy<T>(p, u, du);
    r.err_unrolled = relative_error(dy, oracle::unrolled_jvp(p, u, du).dy);
    const oracle::SequenceMap f = [&](const Tensor<double>& x) { return forward(p, x); };
    r.err_fd = relative_error(dy, oracle::fd_jvp(f, u, du, eps));
  });

  CommandResult res;
  CsvWriter csv(ctx.path("verify.csv"), {"L", "D", "N", "seed", "rel_err_unrolled", "rel_err_fd"});
  double worst_u = 0.0, worst_fd = 0.0;
  for (const auto& r : rows) {
    csv << r.len << r.d << r.n << std::size_t(r.seed) << r.err_unrolled << r.err_fd;
    csv.end_row();
    worst_u = std::max(worst_u, r.err_unrolled);
    worst_fd = std::max(worst_fd, r.err_fd);
    const std::string where = "L=" + std::to_string(r.len) + " D=" + std::to_string(r.d) +
                              " N=" + std::to_string(r.n) + " seed=" + std::to_string(r.seed);
    if (!(r.err_unrolled <= tol_u)) res.breaches.push_back(breach(where + " rel_err_unrolled", r.err_unrolled, tol_u));
    if (!(r.err_fd <= tol_fd)) res.breaches.push_back(breach(where + " rel_err_fd", r.err_fd, tol_fd));
  }
  res.outputs = {"verify.csv"};
  res.summary = {{"rows", rows.size()}, {"max_rel_err_unrolled", worst_u}, {"max_rel_err_fd", worst_fd}};
  res.pass = res.breaches.empty();
  return res;
}

// invariance

template <Real T>
CommandResult invariance_impl(const RunContext& ctx) {
  const auto lengths = log_spaced(ctx.get<std::size_t>("invariance.min_length"),
                                  ctx.get<std::size_t>("invariance.max_length"), ctx.get<std::size_t>("invariance.count"));
  const auto d = ctx.get<std::size_t>("invariance.channels"), n = ctx.get<std::size_t>("invariance.states");
  const double alpha = ctx.get<double>("invariance.alpha");
  const auto block = ctx.get<std::size_t>("block_size");
  const auto p = random_params(d, n, ctx.seed);

  std::vector<double> errs(lengths.size());
  parallel_for(lengths.size(), ctx.threads, [&](std::size_t i) {
    const auto u = random_sequence(lengths[i], d, ctx.seed, 100 + 2 * i);
    const auto du = random_sequence(lengths[i], d, ctx.seed, 101 + 2 * i);
    errs[i] = relative_error(streamed_dy<T>(p, u, du, block), oracle::unrolled_jvp(p, u, du).dy);
  });

  CommandResult res;
  CsvWriter csv(ctx.path("invariance.csv"), {"L", "rel_err"});
  std::vector<double> xs;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    csv << lengths[i] << errs[i];
    csv.end_row();
    xs.push_back(double(lengths[i]));
  }
  const auto reg = ols_slope_test(xs, errs);
  CsvWriter fit(ctx.path("invariance_fit.csv"), {"slope", "intercept", "stderr", "t_stat", "p_value", "n", "method", "alpha"});
  fit << reg.slope << reg.intercept << reg.stderr_slope << reg.t_stat << reg.p_value << reg.n << reg.method << alpha;
  fit.end_row();
  if (!(reg.p_value > alpha)) {
    res.breaches.push_back("slope " + format_double(reg.slope) + " is significant: p = " + format_double(reg.p_value) +
                           " <= " + format_double(alpha));
  }
  res.outputs = {"invariance.csv", "invariance_fit.csv"};
  res.summary = nlohmann::json::parse(reg.to_json());
  res.pass = res.breaches.empty();
  return res;
}

// ghost-pulse

template <Real T>
CommandResult ghost_impl(const RunContext& ctx) {
  const auto len = ctx.get<std::size_t>("ghost.length"), t0 = ctx.get<std::size_t>("ghost.pulse_step");
  const auto d = ctx.get<std::size_t>("ghost.channels"), n = ctx.get<std::size_t>("ghost.states");
  const auto window = ctx.get<std::size_t>("ghost.window");
  const double eps = ctx.get<double>("ghost.eps");
  if (t0 >= len) throw Error("ghost-pulse: pulse_step must be below length");
  if (window == 0) throw Error("ghost-pulse: window must be positive");

  const auto p = random_params(d, n, ctx.seed).cast<T>();
  const auto u = random_sequence(len, d, ctx.seed, 1).cast<T>();
  GeneratorSource<T> src(len, d, [&](std::size_t t, std::span<T> u_row, std::span<T> du_row) {
    const auto row = u.row(t);
    std::copy(row.begin(), row.end(), u_row.begin());
    std::fill(du_row.begin(), du_row.end(), t == t0 ? static_cast<T>(eps) : T(0));
  });

  std::vector<double> window_max((len + window - 1) / window, 0.0);
  std::size_t leaks = 0, first_leak = len;
  double max_after = 0.0;
  CallbackSink<T> sink([&](std::size_t b0, std::size_t count, std::span<const T>, std::span<const T> dy) {
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t t = b0 + r;
      for (std::size_t c = 0; c < d; ++c) {
        const double v = std::abs(double(dy[r * d + c]));
        window_max[t / window] = std::max(window_max[t / window], v);
        if (t < t0) {
          if (dy[r * d + c] != T(0)) {
            ++leaks;
            first_leak = std::min(first_leak, t);
          }
        } else {
          max_after = std::max(max_after, v);
        }
      }
    }
  });
  const auto start = Clock::now();
  run_tose<T>(p, src, sink, BlockPlan::make(len, ctx.get<std::size_t>("block_size")), nullptr, nullptr,
              ToseOptions{ScanMode::fold, false});
  const double elapsed = seconds_since(start);

  CommandResult res;
  CsvWriter csv(ctx.path("ghost_pulse.csv"), {"t_begin", "t_end", "max_abs_dy"});
  for (std::size_t w = 0; w < window_max.size(); ++w) {
    csv << w * window << std::min(len, (w + 1) * window) << window_max[w];
    csv.end_row();
  }
  const bool pass = leaks == 0 && max_after > 0.0;
  CsvWriter sum(ctx.path("ghost_pulse_summary.csv"),
                {"L", "pulse_step", "eps", "leaking_entries", "max_abs_dy_before", "max_abs_dy_after", "pass"});
  double max_before = 0.0;
  for (std::size_t w = 0; w * window < t0 && w < window_max.size(); ++w) {
    if ((w + 1) * window <= t0) max_before = std::max(max_before, window_max[w]);
  }
  sum << len << t0 << eps << leaks << max_before << max_after << pass;
  sum.end_row();
  CsvWriter timing(ctx.path("ghost_pulse_timing.csv"), {"L", "seconds"});
  timing << len << elapsed;
  timing.end_row();

  if (leaks > 0) res.breaches.push_back("dy nonzero before the pulse, first at t=" + std::to_string(first_leak));
  if (!(max_after > 0.0)) res.breaches.push_back("dy is zero at and after the pulse");
  res.outputs = {"ghost_pulse.csv", "ghost_pulse_summary.csv"};
  res.timing_outputs = {"ghost_pulse_timing.csv"};
  res.summary = {{"leaking_entries", leaks}, {"max_abs_dy_after", max_after}};
  res.pass = pass;
  return res;
}

// stiffness

struct StiffRow {
  double g;
  double err_stab = 0.0, err_plain = 0.0, log_min = 0.0;
  bool underflow = false;
  std::size_t first_underflow = 0;
};

CommandResult stiffness_impl(const RunContext& ctx) {
  const auto grid = ctx.get<std::vector<double>>("stiffness.log_decays");
  const auto len = ctx.get<std::size_t>("stiffness.length");
  const auto d = ctx.get<std::size_t>("stiffness.channels"), n = ctx.get<std::size_t>("stiffness.states");
  const double tol = ctx.get<double>("stiffness.tol");
  const auto block = ctx.get<std::size_t>("block_size");

  std::vector<StiffRow> rows;
  for (const double g : grid) rows.push_back({g});
  parallel_for(rows.size(), ctx.threads, [&](std::size_t i) {
    auto& r = rows[i];
    const auto p = stiff_params(d, n, r.g, ctx.seed);
    const auto u = random_sequence(len, d, ctx.seed, 1), du = random_sequence(len, d, ctx.seed, 2);
    const auto ref = pgf_jvp_dense<double>(p, u, du).dy;
    const auto p32 = p.cast<float>();
    const auto u32 = u.cast<float>(), du32 = du.cast<float>();
    r.err_stab = relative_error(pgf_jvp_stabilized<float>(p32, u32, du32, BlockPlan::make(len, block)).dy.cast<double>(), ref);
    r.err_plain = relative_error(pgf_jvp_dense<float>(p32, u32, du32).dy.cast<double>(), ref);
    const auto rep = cumulative_product<float>(log_decay<float>(p32.continuous_a(), discretize(p32, u32)));
    r.underflow = rep.underflowed;
    r.first_underflow = rep.first_underflow_step;
    r.log_min = rep.log_product_min;
  });

  CommandResult res;
  CsvWriter csv(ctx.path("stiffness.csv"), {"stiffness", "rel_err", "naive_underflowed", "naive_first_underflow_step",
                                             "log_product_min", "rel_err_plain_f32"});
  double worst = 0.0;
  for (const auto& r : rows) {
    csv << r.g << r.err_stab << r.underflow << (r.underflow ? r.first_underflow : std::size_t(0)) << r.log_min
        << r.err_plain;
    csv.end_row();
    worst = std::max(worst, r.err_stab);
    if (!(r.err_stab < tol)) res.breaches.push_back(breach("stiffness " + format_double(r.g) + " rel_err", r.err_stab, tol));
  }
  res.outputs = {"stiffness.csv"};
  res.summary = {{"max_rel_err", worst}, {"stiff_end_underflowed", !rows.empty() && rows.front().underflow}};
  res.pass = res.breaches.empty();
  return res;
}

// memory

struct MemRow {
  std::string strategy;
  std::size_t len;
  std::size_t graph = 0, io = 0, acc = 0, total = 0;
};

template <Real T>
MemRow pgf_memory_run(const GlrParams<double>& p, std::size_t len, std::size_t block, bool memory_io, std::uint64_t seed) {
  const auto pt = p.cast<T>();
  const std::size_t d = p.channels;
  MemoryMeter meter;
  {
    const MemTag io{&meter, MemClass::io};
    if (memory_io) {
      const auto u = random_sequence(len, d, seed, 1).cast<T>(io), du = random_sequence(len, d, seed, 2).cast<T>(io);
      MemorySource<T> src(u, du);
      MemorySink<T> sink(len, d, io);
      run_tose<T>(pt, src, sink, BlockPlan::make(len, block), &meter, nullptr, ToseOptions{ScanMode::fold, false});
    } else {
      GeneratorSource<T> src(len, d, [](std::size_t t, std::span<T> u_row, std::span<T> du_row) {
        for (std::size_t c = 0; c < u_row.size(); ++c) {
          u_row[c] = static_cast<T>(std::sin(0.01 * double(t) + double(c)));
          du_row[c] = static_cast<T>(std::cos(0.02 * double(t) - double(c)));
        }
      });
      DiscardSink<T> sink;
      run_tose<T>(pt, src, sink, BlockPlan::make(len, block), &meter, nullptr, ToseOptions{ScanMode::fold, false});
    }
  }
  if (!meter.balanced()) throw Error("memory: meter ledger unbalanced after run");
  return {memory_io ? "pgf_memory_io" : "pgf_discard_io", len, meter.peak(MemClass::graph), meter.peak(MemClass::io),
          meter.peak(MemClass::accumulator), meter.peak_total()};
}

MemRow unrolled_memory_run(const GlrParams<double>& p, std::size_t len, std::uint64_t seed) {
  MemoryMeter meter;
  {
    const MemTag io{&meter, MemClass::io};
    const auto u = random_sequence(len, p.channels, seed, 1).cast<double>(io);
    const auto du = random_sequence(len, p.channels, seed, 2).cast<double>(io);
    oracle::unrolled_jvp(p, u, du, &meter);
  }
  if (!meter.balanced()) throw Error("memory: meter ledger unbalanced after unrolled run");
  return {"unrolled", len, meter.peak(MemClass::graph), meter.peak(MemClass::io), meter.peak(MemClass::accumulator),
          meter.peak_total()};
}

template <Real T>
CommandResult memory_impl(const RunContext& ctx) {
  const auto pgf_lengths = ctx.get<std::vector<std::size_t>>("memory.pgf_lengths");
  const auto un_lengths = ctx.get<std::vector<std::size_t>>("memory.unrolled_lengths");
  const auto d = ctx.get<std::size_t>("memory.channels"), n = ctx.get<std::size_t>("memory.states");
  const auto block = ctx.get<std::size_t>("block_size");
  if (pgf_lengths.size() < 3 || un_lengths.size() < 3) throw Error("memory: slope fits need at least 3 lengths");
  const auto p = random_params(d, n, ctx.seed);

  std::vector<MemRow> rows;
  for (const bool mem_io : {false, true}) {
    for (const auto len : pgf_lengths) rows.push_back({mem_io ? "pgf_memory_io" : "pgf_discard_io", len});
  }
  for (const auto len : un_lengths) rows.push_back({"unrolled", len});
  parallel_for(rows.size(), ctx.threads, [&](std::size_t i) {
    auto& r = rows[i];
    if (r.strategy == "unrolled") {
      r = unrolled_memory_run(p, r.len, ctx.seed);
    } else {
      r = pgf_memory_run<T>(p, r.len, block, r.strategy == "pgf_memory_io", ctx.seed);
    }
  });

  CommandResult res;
  CsvWriter csv(ctx.path("memory.csv"),
                {"strategy", "L", "graph_peak_bytes", "io_peak_bytes", "accumulator_peak_bytes", "total_peak_bytes"});
  for (const auto& r : rows) {
    csv << r.strategy << r.len << r.graph << r.io << r.acc << r.total;
    csv.end_row();
  }
  CsvWriter fit(ctx.path("memory_slopes.csv"), {"strategy", "slope_bytes_per_step", "intercept", "stderr", "t_stat",
                                                 "p_value", "n", "graph_slope_bytes_per_step"});
  nlohmann::json slopes = nlohmann::json::object();
  for (const std::string strategy : {"pgf_discard_io", "pgf_memory_io", "unrolled"}) {
    std::vector<std::pair<std::size_t, std::size_t>> total, graph;
    for (const auto& r : rows) {
      if (r.strategy != strategy) continue;
      total.emplace_back(r.len, r.total);
      graph.emplace_back(r.len, r.graph);
    }
    const auto reg = slope_report(total);
    const auto greg = slope_report(graph);
    fit << strategy << reg.slope << reg.intercept << reg.stderr_slope << reg.t_stat << reg.p_value << reg.n << greg.slope;
    fit.end_row();
    slopes[strategy] = reg.slope;
  }
  std::set<std::size_t> discard_graph;
  for (const auto& r : rows) {
    if (r.strategy == "pgf_discard_io") discard_graph.insert(r.graph);
  }
  if (discard_graph.size() != 1) res.breaches.push_back("pgf_discard_io graph peaks differ across L");
  res.outputs = {"memory.csv", "memory_slopes.csv"};
  res.summary = {{"graph_peak_flat", discard_graph.size() == 1}, {"total_slope_bytes_per_step", slopes}};
  res.pass = res.breaches.empty();
  return res;
}

// complexity

double pgf_time(std::size_t d, std::size_t n, std::size_t len, std::uint64_t seed, int repeats) {
  const auto p = random_params(d, n, seed);
  const auto u = random_sequence(len, d, seed, 1), du = random_sequence(len, d, seed, 2);
  double best = std::numeric_limits<double>::infinity();
  volatile double sink = 0.0;
  for (int r = 0; r < std::max(repeats, 1); ++r) {
    const auto start = Clock::now();
    const auto out = pgf_jvp_dense<double>(p, u, du);
    best = std::min(best, seconds_since(start));
    sink = sink + out.dy[0];
  }
  (void)sink;
  return best;
}

CommandResult complexity_impl(const RunContext& ctx) {
  const auto states = ctx.get<std::vector<std::size_t>>("complexity.states");
  const auto rtrl_len = ctx.get<std::size_t>("complexity.rtrl_length");
  const auto pgf_len = ctx.get<std::size_t>("complexity.pgf_length");
  const auto d = ctx.get<std::size_t>("complexity.pgf_channels");
  const int repeats = ctx.get<int>("complexity.repeats");
  const double min_rtrl = ctx.get<double>("complexity.min_rtrl_slope");
  const double max_pgf = ctx.get<double>("complexity.max_pgf_slope");
  if (states.size() < 3) throw Error("complexity: need at least 3 state sizes");

  CommandResult res;
  CsvWriter plan(ctx.path("complexity.csv"), {"method", "N", "L", "D", "repeats"});
  CsvWriter timing(ctx.path("complexity_timing.csv"), {"method", "N", "L", "seconds"});
  std::vector<double> log_n, log_rtrl, log_pgf;
  for (const auto n : states) {
    const double t_rtrl = oracle::dense_rtrl_time(n, rtrl_len, ctx.seed, repeats);
    const double t_pgf = pgf_time(d, n, pgf_len, ctx.seed, repeats);
    plan << "dense_rtrl" << n << rtrl_len << std::size_t(1) << repeats;
    plan.end_row();
    plan << "pgf" << n << pgf_len << d << repeats;
    plan.end_row();
    timing << "dense_rtrl" << n << rtrl_len << t_rtrl;
    timing.end_row();
    timing << "pgf" << n << pgf_len << t_pgf;
    timing.end_row();
    log_n.push_back(std::log(double(n)));
    log_rtrl.push_back(std::log(t_rtrl));
    log_pgf.push_back(std::log(t_pgf));
  }
  const auto fr = ols_slope_test(log_n, log_rtrl), fp = ols_slope_test(log_n, log_pgf);
  CsvWriter fit(ctx.path("complexity_fit_timing.csv"), {"method", "loglog_slope", "intercept", "stderr", "bound", "pass"});
  const bool rtrl_ok = fr.slope >= min_rtrl, pgf_ok = fp.slope <= max_pgf;
  fit << "dense_rtrl" << fr.slope << fr.intercept << fr.stderr_slope << min_rtrl << rtrl_ok;
  fit.end_row();
  fit << "pgf" << fp.slope << fp.intercept << fp.stderr_slope << max_pgf << pgf_ok;
  fit.end_row();
  if (!rtrl_ok) res.breaches.push_back("dense_rtrl log-log slope " + format_double(fr.slope) + " below " + format_double(min_rtrl));
  if (!pgf_ok) res.breaches.push_back(breach("pgf log-log slope", fp.slope, max_pgf));
  res.outputs = {"complexity.csv"};
  res.timing_outputs = {"complexity_timing.csv", "complexity_fit_timing.csv"};
  res.pass = res.breaches.empty();
  return res;
}

// hessian

struct HessRow {
  Discretization disc;
  bool selective;
  Activation act;
  std::uint64_t seed;
  double err_fd = 0.0, err_sym = 0.0;
};

CommandResult hessian_impl(const RunContext& ctx) {
  const auto len = ctx.get<std::size_t>("hessian.length");
  const auto d = ctx.get<std::size_t>("hessian.channels"), n = ctx.get<std::size_t>("hessian.states");
  const auto seeds = ctx.get<std::size_t>("hessian.seeds");
  const double eps = ctx.get<double>("hessian.fd_eps");
  const double tol_fd = ctx.get<double>("hessian.tol_fd"), tol_sym = ctx.get<double>("hessian.tol_symmetry");
  const auto block = ctx.get<std::size_t>("block_size");

  std::vector<HessRow> rows;
  for (const auto disc : {Discretization::zoh, Discretization::euler}) {
    for (const bool sel : {true, false}) {
      for (const auto act : {Activation::identity, Activation::silu}) {
        for (std::size_t s = 0; s < seeds; ++s) rows.push_back({disc, sel, act, ctx.seed + s});
      }
    }
  }
  parallel_for(rows.size(), ctx.threads, [&](std::size_t i) {
    auto& r = rows[i];
    const auto p = random_params(d, n, r.seed, {r.act, r.disc, r.selective});
    const auto u = random_sequence(len, d, r.seed, 1), v = random_sequence(len, d, r.seed, 2),
               w = random_sequence(len, d, r.seed, 3);
    const auto plan = BlockPlan::make(len, block);
    const auto vw = pgf_hvp<double>(p, u, v, w, plan);
    const auto wv = pgf_hvp<double>(p, u, w, v, plan);
    r.err_fd = relative_error(vw.d2y, oracle::fd_hvp(p, u, v, w, eps));
    r.err_sym = relative_error(wv.d2y, vw.d2y);
  });

  CommandResult res;
  CsvWriter csv(ctx.path("hessian.csv"), {"discretization", "selective_b", "activation", "seed", "L", "D", "N",
                                           "rel_err_fd", "rel_err_symmetry"});
  double worst_fd = 0.0, worst_sym = 0.0;
  for (const auto& r : rows) {
    csv << to_string(r.disc) << r.selective << to_string(r.act) << std::size_t(r.seed) << len << d << n << r.err_fd
        << r.err_sym;
    csv.end_row();
    worst_fd = std::max(worst_fd, r.err_fd);
    worst_sym = std::max(worst_sym, r.err_sym);
    const std::string where = to_string(r.disc) + (r.selective ? " selective " : " fixed-b ") + to_string(r.act) +
                              " seed=" + std::to_string(r.seed);
    if (!(r.err_fd <= tol_fd)) res.breaches.push_back(breach(where + " rel_err_fd", r.err_fd, tol_fd));
    if (!(r.err_sym <= tol_sym)) res.breaches.push_back(breach(where + " rel_err_symmetry", r.err_sym, tol_sym));
  }
  res.outputs = {"hessian.csv"};
  res.summary = {{"max_rel_err_fd", worst_fd}, {"max_rel_err_symmetry", worst_sym}};
  res.pass = res.breaches.empty();
  return res;
}

// params

struct ParamRow {
  std::string param;
  std::size_t count = 0;
  double max_err = 0.0, mean_err = 0.0;
  double tol = 0.0;
};

struct ParamCase {
  Discretization disc;
  bool selective;
  std::uint64_t seed;
  std::vector<ParamRow> rows;
};

ParamRow compare(const std::string& name, const Tensor<double>& g, const Tensor<double>& fd, double tol) {
  ParamRow r{name, g.size(), 0.0, 0.0, tol};
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-12);
    r.max_err = std::max(r.max_err, e);
    r.mean_err += e / double(g.size());
  }
  return r;
}

std::vector<double> flatten(const GradAccumulators<double>& g) {
  std::vector<double> out;
  for (const auto* t : {&g.g_c, &g.g_a, &g.g_a_log, &g.g_b}) out.insert(out.end(), t->span().begin(), t->span().end());
  return out;
}

CommandResult params_impl(const RunContext& ctx) {
  const auto len = ctx.get<std::size_t>("params.length");
  const auto d = ctx.get<std::size_t>("params.channels"), n = ctx.get<std::size_t>("params.states");
  const auto seeds = ctx.get<std::size_t>("params.seeds");
  const double eps = ctx.get<double>("params.fd_eps");
  const double tol = ctx.get<double>("params.tol_fd"), tol_block = ctx.get<double>("params.tol_block");
  const auto block = ctx.get<std::size_t>("params.block_size");
  const auto loss = LossKind::sum_squares;

  std::vector<ParamCase> cases;
  for (const auto disc : {Discretization::zoh, Discretization::euler}) {
    for (const bool sel : {true, false}) {
      for (std::size_t s = 0; s < seeds; ++s) cases.push_back({disc, sel, ctx.seed + s, {}});
    }
  }
  parallel_for(cases.size(), ctx.threads, [&](std::size_t i) {
    auto& c = cases[i];
    const auto p = random_params(d, n, c.seed, {Activation::silu, c.disc, c.selective});
    const auto u = random_sequence(len, d, c.seed, 1);
    const auto adj = AdjointSource<double>::from_loss(loss, len, d);
    const auto g = accumulate_all(p, u, adj, BlockPlan::make(len, block), nullptr, {true});
    const auto g_whole = accumulate_all(p, u, adj, BlockPlan::make(len, len), nullptr, {true});
    c.rows.push_back(compare("c_weight", g.g_c, oracle::fd_param_grad(p, u, loss, oracle::ParamSlot::c_weight, eps), tol));
    c.rows.push_back(compare("a_log", g.g_a_log, oracle::fd_param_grad(p, u, loss, oracle::ParamSlot::a_log, eps), tol));
    const auto slot = c.selective ? oracle::ParamSlot::b_weight : oracle::ParamSlot::b_fixed;
    c.rows.push_back(compare(c.selective ? "b_weight" : "b_fixed", g.g_b, oracle::fd_param_grad(p, u, loss, slot, eps), tol));
    const auto a = flatten(g), b = flatten(g_whole);
    const double e = relative_error<double>(a, b);
    c.rows.push_back({"block_invariance", a.size(), e, e, tol_block});
  });

  CommandResult res;
  CsvWriter csv(ctx.path("params.csv"), {"discretization", "selective_b", "seed", "L", "D", "N", "param", "count",
                                          "max_rel_err", "mean_rel_err", "tol"});
  double worst = 0.0;
  for (const auto& c : cases) {
    for (const auto& r : c.rows) {
      csv << to_string(c.disc) << c.selective << std::size_t(c.seed) << len << d << n << r.param << r.count << r.max_err
          << r.mean_err << r.tol;
      csv.end_row();
      if (r.param != "block_invariance") worst = std::max(worst, r.max_err);
      if (!(r.max_err <= r.tol)) {
        res.breaches.push_back(breach(to_string(c.disc) + (c.selective ? " selective" : " fixed-b") + " seed=" +
                                          std::to_string(c.seed) + " " + r.param,
                                      r.max_err, r.tol));
      }
    }
  }
  res.outputs = {"params.csv"};
  res.summary = {{"max_rel_err_fd", worst}};
  res.pass = res.breaches.empty();
  return res;
}

// jvp

template <Real T>
CommandResult jvp_impl(const RunContext& ctx, const JvpFiles& files) {
  FileSource<T> src(files.u, files.du);
  InstanceOptions opts{parse_activation(ctx.get<std::string>("jvp.activation")),
                       parse_discretization(ctx.get<std::string>("jvp.discretization")),
                       ctx.get<bool>("jvp.selective_b")};
  const auto p = random_params(src.channels(), ctx.get<std::size_t>("jvp.states"), ctx.seed, opts).template cast<T>();
  const std::size_t len = src.length();
  ToseResult<T> out;
  {
    FileSink<T> sink(files.y, files.dy, len, src.channels());
    out = run_tose<T>(p, src, sink, BlockPlan::make(len, ctx.get<std::size_t>("block_size")), nullptr, nullptr,
                      ToseOptions{ScanMode::fold, false});
    sink.close();
  }
  CommandResult res;
  res.summary = {{"L", len}, {"D", src.channels()}, {"blocks", out.stats.blocks}};
  return res;
}

}  // namespace

CommandResult cmd_verify(const RunContext& ctx) {
  return ctx.precision == Precision::f32 ? verify_impl<float>(ctx) : verify_impl<double>(ctx);
}

CommandResult cmd_invariance(const RunContext& ctx) {
  return ctx.precision == Precision::f32 ? invariance_impl<float>(ctx) : invariance_impl<double>(ctx);
}

CommandResult cmd_ghost_pulse(const RunContext& ctx) {
  return ctx.precision == Precision::f32 ? ghost_impl<float>(ctx) : ghost_impl<double>(ctx);
}

CommandResult cmd_stiffness(const RunContext& ctx) {
  require_f64(ctx);
  return stiffness_impl(ctx);
}

CommandResult cmd_memory(const RunContext& ctx) {
  return ctx.precision == Precision::f32 ? memory_impl<float>(ctx) : memory_impl<double>(ctx);
}

CommandResult cmd_complexity(const RunContext& ctx) {
  require_f64(ctx);
  return complexity_impl(ctx);
}

CommandResult cmd_hessian(const RunContext& ctx) {
  require_f64(ctx);
  return hessian_impl(ctx);
}

CommandResult cmd_params(const RunContext& ctx) {
  require_f64(ctx);
  return params_impl(ctx);
}

CommandResult cmd_jvp(const RunContext& ctx, const JvpFiles& files) {
  return ctx.precision == Precision::f32 ? jvp_impl<float>(ctx, files) : jvp_impl<double>(ctx, files);
}

}  // namespace pgf::bench
