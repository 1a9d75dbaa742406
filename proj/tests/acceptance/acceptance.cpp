// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
//   pgf_acceptance --cli PATH/pgf_bench --workdir DIR
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pgf/hessian.hpp"
#include "pgf/instance.hpp"
#include "pgf/io.hpp"
#include "pgf/isomorphs.hpp"
#include "pgf/numerics.hpp"
#include "pgf/oracle.hpp"
#include "pgf/param_grad.hpp"
#include "pgf/tangent.hpp"
#include "pgf/tose.hpp"

namespace fs = std::filesystem;
using namespace pgf;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

Tensor<double> axpy(const Tensor<double>& x, double a, const Tensor<double>& y) {
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * y[i];
  return out;
}

// 1, 2

Outcome exactness(bool against_fd) {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t cells = 0;
  for (const std::size_t len : {128u, 512u, 2048u, 8192u}) {
    for (const std::size_t d : {2u, 4u}) {
      for (const std::size_t n : {4u, 16u}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
          const auto p = random_params(d, n, seed);
          const auto u = random_sequence(len, d, seed, 1), du = random_sequence(len, d, seed, 2);
          const auto dy = pgf_jvp_dense<double>(p, u, du).dy;
          Tensor<double> ref;
          if (against_fd) {
            ref = oracle::fd_jvp([&](const Tensor<double>& x) { return forward(p, x); }, u, du, 1e-5);
          } else {
            ref = oracle::unrolled_jvp(p, u, du).dy;
          }
          worst = std::max(worst, relative_error(dy, ref));
          ++cells;
        }
      }
    }
  }
  const double secs = since(start);
  const double tol = against_fd ? 1e-5 : 1e-12;
  Outcome o{worst <= tol, std::to_string(cells) + " cells, max rel err " + sci(worst) + " (tol " + sci(tol) + "), " +
                              sci(secs) + " s"};
  if (!against_fd && secs >= 60.0) {
    o.pass = false;
    o.detail += " exceeds 60 s";
  }
  return o;
}

// 3

Outcome length_invariance() {
  const auto p = random_params(4, 8, 11);
  const auto p32 = p.cast<float>();
  std::vector<double> xs, ys;
  const std::size_t count = 30;
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = static_cast<std::size_t>(std::llround(100.0 * std::pow(1000.0, double(i) / double(count - 1))));
    const auto u = random_sequence(len, 4, 11, 2 * i), du = random_sequence(len, 4, 11, 2 * i + 1);
    const auto u32 = u.cast<float>(), du32 = du.cast<float>();
    MemorySource<float> src(u32, du32);
    MemorySink<float> sink(len, 4);
    run_tose<float>(p32, src, sink, BlockPlan::make(len, 256), nullptr);
    xs.push_back(double(len));
    ys.push_back(relative_error(sink.dy.cast<double>(), oracle::unrolled_jvp(p, u, du).dy));
  }
  const auto reg = ols_slope_test(xs, ys);
  return {reg.p_value > 0.05, std::to_string(reg.n) + " lengths in [100, 100000], f32 streamed vs f64 oracle, slope " +
                                  sci(reg.slope) + ", p " + sci(reg.p_value) + " (" + reg.method + ")"};
}

// 4

Outcome block_invariance() {
  const std::size_t len = 4096;
  const auto p = random_params(4, 8, 21);
  const auto u = random_sequence(len, 4, 21, 1), du = random_sequence(len, 4, 21, 2);
  const auto dense = pgf_jvp_dense<double>(p, u, du);
  double worst = 0.0;
  for (const std::size_t b : {std::size_t(1), std::size_t(3), std::size_t(16), std::size_t(64), std::size_t(256), len}) {
    for (const auto mode : {ScanMode::fold, ScanMode::associative}) {
      MemorySource<double> src(u, du);
      MemorySink<double> sink(len, 4);
      run_tose<double>(p, src, sink, BlockPlan::make(len, b), nullptr, nullptr, ToseOptions{mode, false});
      worst = std::max({worst, relative_error(sink.dy, dense.dy), relative_error(sink.y, dense.y)});
    }
  }
  return {worst <= 1e-12, "B in {1, 3, 16, 64, 256, L}, fold and associative, max rel err " + sci(worst)};
}

// 5

std::size_t discard_graph_peak(const GlrParams<double>& p, std::size_t len) {
  MemoryMeter meter;
  GeneratorSource<double> src(len, p.channels, [](std::size_t t, std::span<double> u, std::span<double> du) {
    for (std::size_t c = 0; c < u.size(); ++c) {
      u[c] = std::sin(0.003 * double(t) + double(c));
      du[c] = std::cos(0.007 * double(t));
    }
  });
  DiscardSink<double> sink;
  run_tose<double>(p, src, sink, BlockPlan::make(len, 256), &meter);
  return meter.peak(MemClass::graph);
}

double unrolled_graph_slope(std::size_t d, std::size_t n) {
  const auto p = random_params(d, n, 31);
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (const std::size_t len : {1000u, 2000u, 4000u}) {
    MemoryMeter meter;
    oracle::unrolled_jvp(p, random_sequence(len, d, 31, 1), random_sequence(len, d, 31, 2), &meter);
    runs.emplace_back(len, meter.peak(MemClass::graph));
  }
  return slope_report(runs).slope;
}

Outcome graph_memory() {
  const auto p = random_params(16, 16, 31);
  std::set<std::size_t> peaks;
  for (const std::size_t len : {10000u, 20000u, 40000u}) peaks.insert(discard_graph_peak(p, len));
  bool pass = peaks.size() == 1;
  std::string detail = "PGF graph peak " + std::to_string(*peaks.begin()) + " B" +
                       (pass ? " at L = 10k, 20k, 40k" : " differs across L");
  // Unrolled storage per step per lane: three duals (Abar, bbar, h).
  for (const auto& [d, n] : {std::pair<std::size_t, std::size_t>{8, 8}, {16, 16}}) {
    const double per_lane = unrolled_graph_slope(d, n) / double(d * n);
    pass = pass && per_lane >= 48.0 && per_lane <= 64.0;
    detail += "; unrolled slope/(D*N) at D*N=" + std::to_string(d * n) + ": " + sci(per_lane) + " B";
  }
  return {pass, detail};
}

// 6

Outcome ghost_pulse() {
  const std::size_t len = 128000, t0 = 100000, d = 4, n = 8;
  const auto p = random_params(d, n, 41);
  const auto u = random_sequence(len, d, 41, 1);
  GeneratorSource<double> src(len, d, [&](std::size_t t, std::span<double> u_row, std::span<double> du_row) {
    const auto row = u.row(t);
    std::copy(row.begin(), row.end(), u_row.begin());
    std::fill(du_row.begin(), du_row.end(), t == t0 ? 1e-6 : 0.0);
  });
  std::size_t nonzero_before = 0;
  double max_after = 0.0;
  CallbackSink<double> sink([&](std::size_t b0, std::size_t count, std::span<const double>, std::span<const double> dy) {
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double v = dy[r * d + c];
        if (b0 + r < t0) {
          nonzero_before += v != 0.0;
        } else {
          max_after = std::max(max_after, std::abs(v));
        }
      }
    }
  });
  const auto start = Clock::now();
  run_tose<double>(p, src, sink, BlockPlan::make(len, 256), nullptr);
  const double secs = since(start);
  return {nonzero_before == 0 && max_after > 0.0 && secs < 120.0,
          std::to_string(nonzero_before) + " nonzero dy before t0, max |dy| after " + sci(max_after) + ", " + sci(secs) +
              " s"};
}

// 7

Outcome stiffness() {
  const std::size_t len = 4096, d = 4, n = 8;
  double worst = 0.0;
  bool stiff_underflow = false;
  for (int g = -8; g <= -1; ++g) {
    const auto p = stiff_params(d, n, double(g), 51);
    const auto u = random_sequence(len, d, 51, 1), du = random_sequence(len, d, 51, 2);
    const auto ref = pgf_jvp_dense<double>(p, u, du).dy;
    const auto p32 = p.cast<float>();
    const auto u32 = u.cast<float>(), du32 = du.cast<float>();
    const auto s = pgf_jvp_stabilized<float>(p32, u32, du32, BlockPlan::make(len, 256));
    worst = std::max(worst, relative_error(s.dy.cast<double>(), ref));
    if (g == -8) {
      // Naive single-precision running product of Abar, compared to the exact log sum.
      const auto a = p32.continuous_a();
      const auto step = discretize(p32, u32);
      float prod = 1.0f;
      for (std::size_t t = 0; t < len; ++t) prod *= step.a_bar(t, 0, 0);
      double log_sum = 0.0;
      for (std::size_t t = 0; t < len; ++t) log_sum += double(step.delta(t, 0)) * double(a(0, 0));
      stiff_underflow = prod == 0.0f && log_sum > -1e6;
    }
  }
  return {worst < 1e-6 && stiff_underflow,
          "log decay -8..-1, max rel err " + sci(worst) + ", naive f32 product at -8 " +
              (stiff_underflow ? "underflows to 0" : "does not underflow")};
}

// 8

double max_param_rel(const Tensor<double>& g, const Tensor<double>& fd, double& sum, std::size_t& count) {
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-12);
    worst = std::max(worst, e);
    sum += e;
    ++count;
  }
  return worst;
}

Outcome parameter_gradients() {
  const std::size_t len = 128, d = 2, n = 4;
  double worst = 0.0, block = 0.0, sum = 0.0;
  std::size_t count = 0;
  for (const bool sel : {true, false}) {
    const auto p = random_params(d, n, 61, {Activation::silu, Discretization::zoh, sel});
    const auto u = random_sequence(len, d, 61, 1);
    const auto adj = AdjointSource<double>::from_loss(LossKind::sum_squares, len, d);
    const auto g = accumulate_all(p, u, adj, BlockPlan::make(len, 16), nullptr, {true});
    const auto whole = accumulate_all(p, u, adj, BlockPlan::make(len, len), nullptr, {true});
    // Independent FD: perturb each entry and re-run the primal map.
    const auto fd = [&](oracle::ParamSlot slot) {
      GlrParams<double> q = p;
      Tensor<double>& theta = oracle::param_tensor(q, slot);
      Tensor<double> out(theta.shape());
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i], h = 1e-5 * std::max(std::abs(orig), 1.0);
        theta[i] = orig + h;
        const double lp = loss_value(LossKind::sum_squares, forward(q, u));
        theta[i] = orig - h;
        const double lm = loss_value(LossKind::sum_squares, forward(q, u));
        theta[i] = orig;
        out[i] = (lp - lm) / (2 * h);
      }
      return out;
    };
    worst = std::max(worst, max_param_rel(g.g_c, fd(oracle::ParamSlot::c_weight), sum, count));
    worst = std::max(worst, max_param_rel(g.g_a_log, fd(oracle::ParamSlot::a_log), sum, count));
    worst = std::max(worst, max_param_rel(g.g_b, fd(sel ? oracle::ParamSlot::b_weight : oracle::ParamSlot::b_fixed), sum, count));
    for (const auto& [x, y] : {std::pair{&g.g_c, &whole.g_c}, {&g.g_a, &whole.g_a}, {&g.g_b, &whole.g_b}}) {
      block = std::max(block, relative_error(*x, *y));
    }
  }
  return {worst <= 1e-5 && block <= 1e-12,
          "max rel err vs FD " + sci(worst) + ", mean " + sci(sum / double(count)) + ", block invariance " + sci(block)};
}

// 9

Outcome hessian() {
  const std::size_t len = 256, d = 3, n = 4;
  double fd_err = 0.0, sym = 0.0;
  for (const auto act : {Activation::identity, Activation::silu}) {
    const auto p = random_params(d, n, 71, {act});
    const auto u = random_sequence(len, d, 71, 1), v = random_sequence(len, d, 71, 2), w = random_sequence(len, d, 71, 3);
    const auto plan = BlockPlan::make(len, 64);
    const auto vw = pgf_hvp<double>(p, u, v, w, plan), wv = pgf_hvp<double>(p, u, w, v, plan);
    const double eps = 1e-5;
    const auto plus = oracle::unrolled_jvp(p, axpy(u, eps, w), v).dy, minus = oracle::unrolled_jvp(p, axpy(u, -eps, w), v).dy;
    Tensor<double> fd(plus.shape());
    for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = (plus[i] - minus[i]) / (2 * eps);
    fd_err = std::max(fd_err, relative_error(vw.d2y, fd));
    sym = std::max(sym, relative_error(wv.d2y, vw.d2y));
  }
  return {fd_err <= 1e-4 && sym <= 1e-12, "L=256 rel err vs FD " + sci(fd_err) + ", symmetry " + sci(sym)};
}

// 10

Outcome complexity() {
  std::vector<double> ln, lr, lp;
  for (const std::size_t n : {8u, 16u, 32u, 64u}) {
    const auto p = random_params(1, n, 81);
    const auto u = random_sequence(4096, 1, 81, 1), du = random_sequence(4096, 1, 81, 2);
    double best = 1e300;
    for (int r = 0; r < 5; ++r) {
      const auto start = Clock::now();
      const auto out = pgf_jvp_dense<double>(p, u, du);
      best = std::min(best, since(start));
      if (!std::isfinite(out.dy[0])) return {false, "non-finite output"};
    }
    ln.push_back(std::log(double(n)));
    lr.push_back(std::log(oracle::dense_rtrl_time(n, 256, 81, 5)));
    lp.push_back(std::log(best));
  }
  const double sr = ols_slope_test(ln, lr).slope, sp = ols_slope_test(ln, lp).slope;
  return {sr >= 2.5 && sp <= 1.3, "log-log slope over N = 8..64: dense RTRL " + sci(sr) + ", PGF " + sci(sp)};
}

// 11

LinAttInputs linatt_shift(const LinAttInputs& x, const LinAttInputs& dx, double eps) {
  return {axpy(x.keys, eps, dx.keys), axpy(x.values, eps, dx.values), axpy(x.queries, eps, dx.queries)};
}

Outcome isomorphs() {
  const std::size_t len = 300;
  const LinAttInputs x{elu_plus_one(random_sequence(len, 4, 91, 1)), random_sequence(len, 3, 91, 2),
                       elu_plus_one(random_sequence(len, 4, 91, 3))};
  const LinAttInputs dx{random_sequence(len, 4, 91, 4), random_sequence(len, 3, 91, 5), random_sequence(len, 4, 91, 6)};
  const double eps = 1e-6;
  const auto yp = linatt_forward(linatt_shift(x, dx, eps)), ym = linatt_forward(linatt_shift(x, dx, -eps));
  Tensor<double> fd_l(yp.shape());
  for (std::size_t i = 0; i < fd_l.size(); ++i) fd_l[i] = (yp[i] - ym[i]) / (2 * eps);
  const double err_l = relative_error(linatt_jvp(x, dx, BlockPlan::make(len, 64)).dy, fd_l);

  const std::vector<double> w{0.8, -0.6};
  const auto feats = random_sequence(len, 2, 92, 1), dfeats = random_sequence(len, 2, 92, 2);
  const auto [alpha, dalpha] = selective_decay(w, feats, dfeats);
  const DecayInputs dx_in{dalpha, random_sequence(len, 3, 92, 3), random_sequence(len, 2, 92, 4)};
  const DecayInputs x_in{alpha, random_sequence(len, 3, 92, 5), random_sequence(len, 2, 92, 6)};
  const auto shifted = [&](double e) {
    const auto a = selective_decay(w, axpy(feats, e, dfeats), dfeats).first;
    return decay_forward({a, axpy(x_in.keys, e, dx_in.keys), axpy(x_in.values, e, dx_in.values)});
  };
  const auto hp = shifted(eps), hm = shifted(-eps);
  Tensor<double> fd_d(hp.shape());
  for (std::size_t i = 0; i < fd_d.size(); ++i) fd_d[i] = (hp[i] - hm[i]) / (2 * eps);
  const double err_d = relative_error(decay_jvp(x_in, dx_in, BlockPlan::make(len, 64)).dh, fd_d);

  // Associativity suite on decay operators: triples, identity, fold vs composed.
  double assoc = 0.0, ident = 0.0, fold_err = 0.0;
  for (std::size_t t = 0; t + 2 < 60; ++t) {
    const auto m1 = decay_operators(x_in, dx_in, t, 1), m2 = decay_operators(x_in, dx_in, t + 1, 1),
               m3 = decay_operators(x_in, dx_in, t + 2, 1);
    const auto l = compose(m3, compose(m2, m1)), r = compose(compose(m3, m2), m1);
    for (const auto& [a, b] : {std::pair{&l.a, &r.a}, {&l.k, &r.k}, {&l.b, &r.b}, {&l.j, &r.j}}) {
      assoc = std::max(assoc, relative_error(*a, *b));
    }
    const auto id = AugmentedOperator<double>::identity(1, 3, 2);
    const auto li = compose(id, m1), ri = compose(m1, id);
    for (const auto& [a, b] : {std::pair{&li.a, &m1.a}, {&ri.b, &m1.b}, {&li.j, &m1.j}, {&ri.k, &m1.k}}) {
      ident = std::max(ident, relative_error(*a, *b));
    }
  }
  auto all = decay_operators(x_in, dx_in, 0, 60);
  auto s0 = DualState<double>::zeros(3, 2);
  for (std::size_t i = 0; i < 6; ++i) s0.h[i] = 0.1 * double(i + 1), s0.dh[i] = -0.05 * double(i);
  const auto folded = fold(all, s0);
  prefix_scan(all);
  const auto composed = apply(all, 59, s0);
  fold_err = std::max(relative_error(composed.h, folded.h), relative_error(composed.dh, folded.dh));

  const bool pass = err_l <= 1e-5 && err_d <= 1e-5 && assoc <= 1e-13 && ident == 0.0 && fold_err <= 1e-12;
  return {pass, "linatt vs FD " + sci(err_l) + ", decay vs FD " + sci(err_d) + ", associativity " + sci(assoc) +
                    ", identity " + sci(ident) + ", scan vs fold " + sci(fold_err)};
}

// 12

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

int run(const std::string& cmd, const std::string& stdout_path = "/dev/null") {
  return std::system((cmd + " > \"" + stdout_path + "\" 2>/dev/null").c_str());
}

Outcome determinism(const std::string& cli, const fs::path& workdir) {
  if (cli.empty()) return {false, "no --cli given"};
  fs::remove_all(workdir);
  fs::create_directories(workdir);

  // Raw inputs for the file-streaming command.
  const auto u = random_sequence(1000, 3, 5, 1), du = random_sequence(1000, 3, 5, 2);
  for (const auto& [name, t] : {std::pair{"u.bin", &u}, {"du.bin", &du}}) {
    io::RawF64Writer wr((workdir / name).string());
    wr.write(t->span());
    wr.close();
    io::write_stream_sidecar((workdir / name).string(), {1000, 3, "float64"});
  }

  const std::vector<std::string> commands{"verify",     "invariance", "ghost-pulse", "stiffness", "memory",
                                          "complexity", "hessian",    "params",      "jvp"};
  std::vector<std::string> bad;
  std::size_t files = 0;
  for (const auto& c : commands) {
    for (const int rep : {1, 2}) {
      const fs::path out = workdir / (c + "_" + std::to_string(rep));
      std::string cmd = "\"" + cli + "\" " + c + " --seed 7 --threads 1 --out \"" + out.string() + "\"";
      if (c == "invariance") cmd += " --precision f32";
      if (c == "jvp") {
        cmd += " --u \"" + (workdir / "u.bin").string() + "\" --du \"" + (workdir / "du.bin").string() + "\" --y \"" +
               (out / "y.bin").string() + "\" --dy \"" + (out / "dy.bin").string() + "\"";
        fs::create_directories(out);
      }
      if (run(cmd) != 0) bad.push_back(c + " exited nonzero");
    }
    const fs::path a = workdir / (c + "_1"), b = workdir / (c + "_2");
    if (!fs::exists(a)) continue;
    for (const auto& entry : fs::directory_iterator(a)) {
      const auto name = entry.path().filename().string();
      if (name.find("timing") != std::string::npos) continue;
      ++files;
      if (!fs::exists(b / name) || read_file(entry.path()) != read_file(b / name)) bad.push_back(c + "/" + name);
    }
  }
  const std::string pc = (workdir / "print_config").string();
  run("\"" + cli + "\" print-config", pc + "_1");
  run("\"" + cli + "\" print-config", pc + "_2");
  ++files;
  if (read_file(pc + "_1").empty() || read_file(pc + "_1") != read_file(pc + "_2")) bad.push_back("print-config");

  std::string detail = std::to_string(commands.size() + 1) + " commands, " + std::to_string(files) + " files compared";
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  fs::path workdir = fs::temp_directory_path() / "pgf_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else {
      std::cerr << "usage: pgf_acceptance --cli PATH --workdir DIR\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"exactness vs unrolled oracle", [] { return exactness(false); }},
      {"agreement with finite differences", [] { return exactness(true); }},
      {"error does not grow with length", length_invariance},
      {"block invariance", block_invariance},
      {"length-independent graph memory", graph_memory},
      {"ghost pulse causality", ghost_pulse},
      {"stiff decay in single precision", stiffness},
      {"parameter gradients", parameter_gradients},
      {"hessian-vector products", hessian},
      {"complexity collapse", complexity},
      {"isomorphic recurrences", isomorphs},
      {"cli determinism", [&] { return determinism(cli, workdir); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
