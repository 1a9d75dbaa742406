// SPDX-License-Identifier: Apache-2.0
#include "pgf/tose.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace pgf {

BlockPlan BlockPlan::make(std::size_t length, std::size_t block_size) {
  if (length == 0) throw Error("BlockPlan: length must be >= 1");
  if (block_size == 0) throw Error("BlockPlan: block size must be >= 1");
  return {length, block_size};
}

std::size_t BlockPlan::count(std::size_t k) const { return std::min(block_size, length - begin(k)); }

template <Real T>
MemorySource<T>::MemorySource(const Tensor<T>& u, const Tensor<T>& du) : u_(u), du_(du) {
  if (u.shape().rank != 2 || !(u.shape() == du.shape())) throw ShapeError("MemorySource: u/du shape mismatch");
}

template <Real T>
std::size_t MemorySource<T>::load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) {
  const std::size_t len = length();
  const std::size_t got = t0 >= len ? 0 : std::min(count, len - t0);
  const auto src_u = u_.rows(t0, got);
  const auto src_du = du_.rows(t0, got);
  std::copy(src_u.begin(), src_u.end(), u.begin());
  std::copy(src_du.begin(), src_du.end(), du.begin());
  return got;
}

template <Real T>
std::size_t GeneratorSource<T>::load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) {
  const std::size_t got = t0 >= length_ ? 0 : std::min(count, length_ - t0);
  for (std::size_t i = 0; i < got; ++i) {
    fill_(t0 + i, u.subspan(i * channels_, channels_), du.subspan(i * channels_, channels_));
  }
  return got;
}

template <Real T>
FileSource<T>::FileSource(const std::string& u_path, const std::string& du_path)
    : meta_(io::read_stream_sidecar(u_path)), u_in_(u_path), du_in_(du_path) {
  const auto dmeta = io::read_stream_sidecar(du_path);
  if (dmeta.length != meta_.length || dmeta.channels != meta_.channels) {
    throw ShapeError("FileSource: u and du sidecars disagree");
  }
}

template <Real T>
std::size_t FileSource<T>::load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) {
  if (t0 != next_) throw Error("FileSource: blocks must be requested in order");
  const std::size_t D = meta_.channels;
  buf_.resize(count * D);
  const std::size_t got_u = u_in_.read(buf_) / D;
  std::transform(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(got_u * D), u.begin(),
                 [](double v) { return static_cast<T>(v); });
  const std::size_t got_du = du_in_.read(buf_) / D;
  std::transform(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(got_du * D), du.begin(),
                 [](double v) { return static_cast<T>(v); });
  const std::size_t got = std::min(got_u, got_du);
  next_ = t0 + got;
  return got;
}

template <Real T>
void MemorySink<T>::consume(std::size_t t0, std::size_t count, std::span<const T> y_rows,
                            std::span<const T> dy_rows) {
  if (t0 + count > y.dim(0)) throw ShapeError("MemorySink: rows beyond allocated length");
  std::copy(y_rows.begin(), y_rows.end(), y.rows(t0, count).begin());
  std::copy(dy_rows.begin(), dy_rows.end(), dy.rows(t0, count).begin());
}

template <Real T>
FileSink<T>::FileSink(const std::string& y_path, const std::string& dy_path, std::size_t length,
                      std::size_t channels)
    : y_path_(y_path), dy_path_(dy_path), meta_{length, channels, "float64"}, y_out_(y_path), dy_out_(dy_path) {}

template <Real T>
void FileSink<T>::consume(std::size_t, std::size_t, std::span<const T> y, std::span<const T> dy) {
  buf_.assign(y.begin(), y.end());
  y_out_.write(buf_);
  buf_.assign(dy.begin(), dy.end());
  dy_out_.write(buf_);
}

template <Real T>
void FileSink<T>::close() {
  if (closed_) return;
  closed_ = true;
  y_out_.close();
  dy_out_.close();
  io::write_stream_sidecar(y_path_, meta_);
  io::write_stream_sidecar(dy_path_, meta_);
}

template <Real T>
FileSink<T>::~FileSink() {
  try {
    close();
  } catch (...) {
  }
}

template <Real T>
DualState<T> handoff(const DualState<T>& s, MemTag tag) {
  DualState<T> out{Tensor<T>(s.h.shape(), tag), Tensor<T>(s.dh.shape(), tag)};
  std::copy(s.h.span().begin(), s.h.span().end(), out.h.data());
  std::copy(s.dh.span().begin(), s.dh.span().end(), out.dh.data());
  return out;
}

template <Real T>
ToseResult<T> run_tose(const GlrParams<T>& p, StreamSource<T>& source, StreamSink<T>& sink, const BlockPlan& plan,
                       MemoryMeter* meter, const DualState<T>* initial, ToseOptions opts) {
  p.validate();
  if (source.channels() != p.channels) throw ShapeError("run_tose: source channel count differs from params");
  if (plan.length != source.length()) {
    throw Error("run_tose: plan covers " + std::to_string(plan.length) + " steps but the source has " +
                std::to_string(source.length()));
  }
  MemoryMeter local;
  MemoryMeter& m = meter != nullptr ? *meter : local;
  const MemTag graph{&m, MemClass::graph};
  const std::size_t D = p.channels, N = p.states;

  const Tensor<T> a_cont = p.continuous_a();
  DualState<T> carried = DualState<T>::zeros(D, N, graph);
  if (initial != nullptr) {
    if (initial->h.size() != p.lanes() || initial->dh.size() != p.lanes()) {
      throw ShapeError("run_tose: initial state lane count mismatch");
    }
    carried = handoff(*initial, graph);
  }

  RunStats stats;
  stats.blocks = plan.n_blocks();
  bool have_floor = false;
  for (std::size_t k = 0; k < plan.n_blocks(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t t0 = plan.begin(k), count = plan.count(k);
    DualState<T> working = std::move(carried);
    {
      Tensor<T> u({count, D}, graph), du({count, D}, graph);
      Tensor<T> y({count, D}, graph), dy({count, D}, graph);
      const std::size_t got = source.load(t0, count, u.span(), du.span());
      if (got < count) {
        throw SourceExhaustedError("source exhausted in block " + std::to_string(k) + " at step " +
                                   std::to_string(t0 + got) + " (expected " + std::to_string(plan.length) +
                                   " steps)");
      }
      try {
        require_finite(du, "du", t0);
        jvp_block<T>(p, a_cont, u.span(), du.span(), count, t0, working, y.span(), dy.span(), opts.mode, graph);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("block " + std::to_string(k) + ": " + e.what());
      }
      sink.consume(t0, count, y.span(), dy.span());
    }
    carried = handoff(working, graph);
    working = DualState<T>{};

    const std::size_t floor = m.live(MemClass::graph);
    if (!have_floor) {
      stats.boundary_graph_bytes = floor;
      have_floor = true;
    } else if (floor != stats.boundary_graph_bytes) {
      throw std::logic_error("run_tose: live graph bytes changed across block boundaries");
    }
    if (opts.time_blocks) {
      stats.block_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  }

  stats.peak_graph_bytes = m.peak(MemClass::graph);
  stats.peak_io_bytes = m.peak(MemClass::io);
  stats.peak_total_bytes = m.peak_total();
  return {handoff(carried, MemTag{}), stats};
}

#define PGF_INSTANTIATE_TOSE(T)                                                                              \
  template class MemorySource<T>;                                                                            \
  template class GeneratorSource<T>;                                                                         \
  template class FileSource<T>;                                                                              \
  template class MemorySink<T>;                                                                              \
  template class FileSink<T>;                                                                                \
  template DualState<T> handoff<T>(const DualState<T>&, MemTag);                                             \
  template ToseResult<T> run_tose<T>(const GlrParams<T>&, StreamSource<T>&, StreamSink<T>&, const BlockPlan&, \
                                     MemoryMeter*, const DualState<T>*, ToseOptions);

PGF_INSTANTIATE_TOSE(float)
PGF_INSTANTIATE_TOSE(double)

}  // namespace pgf
