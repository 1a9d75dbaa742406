// SPDX-License-Identifier: Apache-2.0
#include "pgf/isomorphs.hpp"

#include <cmath>
#include <vector>

namespace pgf {

Tensor<double> elu_plus_one(const Tensor<double>& x) {
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] + 1.0 : std::exp(x[i]);
  return out;
}

LinAttState LinAttState::zeros(std::size_t nk, std::size_t nv, MemTag tag) {
  return {Tensor<double>({nk, nv}, tag), Tensor<double>({nk, nv}, tag), Tensor<double>({nk}, tag),
          Tensor<double>({nk}, tag)};
}

namespace {

void check_linatt(const LinAttInputs& x, const char* what) {
  const auto& k = x.keys;
  if (k.shape().rank != 2 || x.values.shape().rank != 2 || !(x.queries.shape() == k.shape()) ||
      x.values.dim(0) != k.dim(0)) {
    throw ShapeError(std::string(what) + ": keys/queries must be [L x Nk], values [L x Nv]");
  }
}

double guarded(double den, std::size_t t) {
  if (std::abs(den) < 1e-12) {
    throw Error("linear attention: normalizer q^T z = " + std::to_string(den) + " below 1e-12 at step " +
                std::to_string(t));
  }
  return den;
}

}  // namespace

Tensor<double> linatt_forward(const LinAttInputs& x) {
  check_linatt(x, "linatt_forward");
  const std::size_t L = x.keys.dim(0), nk = x.keys.dim(1), nv = x.values.dim(1);
  Tensor<double> y({L, nv});
  std::vector<double> h(nk * nv, 0.0), z(nk, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    double den = 0.0;
    for (std::size_t a = 0; a < nk; ++a) {
      z[a] += x.keys(t, a);
      for (std::size_t b = 0; b < nv; ++b) h[a * nv + b] += x.keys(t, a) * x.values(t, b);
      den += x.queries(t, a) * z[a];
    }
    guarded(den, t);
    for (std::size_t b = 0; b < nv; ++b) {
      double num = 0.0;
      for (std::size_t a = 0; a < nk; ++a) num += x.queries(t, a) * h[a * nv + b];
      y(t, b) = num / den;
    }
  }
  return y;
}

LinAttResult linatt_jvp(const LinAttInputs& x, const LinAttInputs& dx, const BlockPlan& plan, MemoryMeter* meter) {
  check_linatt(x, "linatt_jvp");
  check_linatt(dx, "linatt_jvp");
  if (!(x.keys.shape() == dx.keys.shape()) || !(x.values.shape() == dx.values.shape())) {
    throw ShapeError("linatt_jvp: perturbation shapes differ from inputs");
  }
  const std::size_t L = x.keys.dim(0), nk = x.keys.dim(1), nv = x.values.dim(1), lanes = nk * nv;
  if (plan.length != L) throw Error("linatt_jvp: plan length differs from input length");
  const MemTag graph{meter, MemClass::graph};
  const MemTag io{meter, MemClass::io};
  const auto& kern = kernels::lanes<double>();

  LinAttResult r{Tensor<double>({L, nv}, io), Tensor<double>({L, nv}, io)};
  LinAttState s = LinAttState::zeros(nk, nv, graph);
  for (std::size_t blk = 0; blk < plan.n_blocks(); ++blk) {
    const std::size_t t0 = plan.begin(blk), count = plan.count(blk);
    // Per step: a = 1, k = 0 on the (h, dh) lanes, rank-1 drives b and j.
    Tensor<double> ones({lanes}, graph), zero({lanes}, graph);
    ones.fill(1.0);
    Tensor<double> b({count, nk, nv}, graph), j({count, nk, nv}, graph);
    for (std::size_t t = 0; t < count; ++t) {
      const std::size_t row = t0 + t;
      for (std::size_t a = 0; a < nk; ++a) {
        for (std::size_t c = 0; c < nv; ++c) {
          b(t, a, c) = x.keys(row, a) * x.values(row, c);
          j(t, a, c) = dx.keys(row, a) * x.values(row, c) + x.keys(row, a) * dx.values(row, c);
        }
      }
    }
    for (std::size_t t = 0; t < count; ++t) {
      const std::size_t row = t0 + t;
      const kernels::AugIn<double> m{ones.data(), zero.data(), b.row(t).data(), j.row(t).data()};
      kern.dual_step(m, s.h.data(), s.dh.data(), s.h.data(), s.dh.data(), lanes);
      double den = 0.0, dden = 0.0;
      for (std::size_t a = 0; a < nk; ++a) {
        s.z[a] += x.keys(row, a);
        s.dz[a] += dx.keys(row, a);
        den += x.queries(row, a) * s.z[a];
        dden += dx.queries(row, a) * s.z[a] + x.queries(row, a) * s.dz[a];
      }
      guarded(den, row);
      for (std::size_t c = 0; c < nv; ++c) {
        double num = 0.0, dnum = 0.0;
        for (std::size_t a = 0; a < nk; ++a) {
          num += x.queries(row, a) * s.h(a, c);
          dnum += dx.queries(row, a) * s.h(a, c) + x.queries(row, a) * s.dh(a, c);
        }
        r.y(row, c) = num / den;
        r.dy(row, c) = (dnum * den - num * dden) / (den * den);
      }
    }
  }
  return r;
}

namespace {

void check_decay(const DecayInputs& x, const char* what) {
  const std::size_t L = x.alphas.size();
  if (x.keys.shape().rank != 2 || x.values.shape().rank != 2 || x.keys.dim(0) != L || x.values.dim(0) != L) {
    throw ShapeError(std::string(what) + ": alphas [L], keys [L x Nk], values [L x Nv] required");
  }
}

}  // namespace

AugmentedOperator<double> decay_operators(const DecayInputs& x, const DecayInputs& dx, std::size_t t0,
                                          std::size_t count, MemTag tag) {
  const std::size_t nk = x.keys.dim(1), nv = x.values.dim(1);
  AugmentedOperator<double> m(count, nk, nv, tag);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t row = t0 + t;
    const double alpha = x.alphas[row];
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw Error("decay: alpha[" + std::to_string(row) + "] = " + std::to_string(alpha) + " outside (0, 1]");
    }
    for (std::size_t a = 0; a < nk; ++a) {
      for (std::size_t c = 0; c < nv; ++c) {
        m.a(t, a, c) = alpha;
        m.k(t, a, c) = dx.alphas[row];
        m.b(t, a, c) = x.keys(row, a) * x.values(row, c);
        m.j(t, a, c) = dx.keys(row, a) * x.values(row, c) + x.keys(row, a) * dx.values(row, c);
      }
    }
  }
  return m;
}

Tensor<double> decay_forward(const DecayInputs& x) {
  check_decay(x, "decay_forward");
  const std::size_t L = x.alphas.size(), nk = x.keys.dim(1), nv = x.values.dim(1);
  Tensor<double> h({L, nk, nv});
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t a = 0; a < nk; ++a) {
      for (std::size_t c = 0; c < nv; ++c) {
        const double prev = t == 0 ? 0.0 : h(t - 1, a, c);
        h(t, a, c) = x.alphas[t] * prev + x.keys(t, a) * x.values(t, c);
      }
    }
  }
  return h;
}

DecayResult decay_jvp(const DecayInputs& x, const DecayInputs& dx, const BlockPlan& plan, MemoryMeter* meter) {
  check_decay(x, "decay_jvp");
  check_decay(dx, "decay_jvp");
  const std::size_t L = x.alphas.size(), nk = x.keys.dim(1), nv = x.values.dim(1), lanes = nk * nv;
  if (plan.length != L) throw Error("decay_jvp: plan length differs from input length");
  const MemTag graph{meter, MemClass::graph};
  const MemTag io{meter, MemClass::io};
  const auto& kern = kernels::lanes<double>();

  DecayResult r{Tensor<double>({L, nk, nv}, io), Tensor<double>({L, nk, nv}, io)};
  DualState<double> s = DualState<double>::zeros(nk, nv, graph);
  for (std::size_t blk = 0; blk < plan.n_blocks(); ++blk) {
    const std::size_t t0 = plan.begin(blk), count = plan.count(blk);
    AugmentedOperator<double> m = decay_operators(x, dx, t0, count, graph);
    prefix_scan(m);
    for (std::size_t t = 0; t < count; ++t) {
      kern.dual_step(m.row(t), s.h.data(), s.dh.data(), r.h.row(t0 + t).data(), r.dh.row(t0 + t).data(), lanes);
    }
    const auto h_last = r.h.row(t0 + count - 1), dh_last = r.dh.row(t0 + count - 1);
    std::copy(h_last.begin(), h_last.end(), s.h.data());
    std::copy(dh_last.begin(), dh_last.end(), s.dh.data());
  }
  return r;
}

std::pair<Tensor<double>, Tensor<double>> selective_decay(std::span<const double> w, const Tensor<double>& x,
                                                          const Tensor<double>& dx) {
  if (x.shape().rank != 2 || x.dim(1) != w.size() || !(dx.shape() == x.shape())) {
    throw ShapeError("selective_decay: x must be [L x len(w)] and match dx");
  }
  const std::size_t L = x.dim(0);
  Tensor<double> alpha({L}), dalpha({L});
  for (std::size_t t = 0; t < L; ++t) {
    double z = 0.0, dz = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      z += w[i] * x(t, i);
      dz += w[i] * dx(t, i);
    }
    alpha[t] = std::exp(-softplus(z));
    dalpha[t] = -alpha[t] * sigmoid(z) * dz;
  }
  return {alpha, dalpha};
}

}  // namespace pgf
