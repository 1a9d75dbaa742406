// SPDX-License-Identifier: Apache-2.0
//
// Tiled operator-space evolution: block-streamed JVP of the selective recurrence.
// Per block the engine loads (u, du), builds the block's augmented operators,
// evolves the dual state, emits (y, dy) and releases everything but the state.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgf/io.hpp"
#include "pgf/meter.hpp"
#include "pgf/tangent.hpp"

namespace pgf {

inline constexpr std::size_t kDefaultBlockSize = 256;

struct BlockPlan {
  std::size_t length = 0;
  std::size_t block_size = kDefaultBlockSize;

  /// Throws pgf::Error for length == 0 or block_size == 0.
  static BlockPlan make(std::size_t length, std::size_t block_size = kDefaultBlockSize);

  std::size_t n_blocks() const { return (length + block_size - 1) / block_size; }
  std::size_t begin(std::size_t k) const { return k * block_size; }
  std::size_t count(std::size_t k) const;
};

/// Yields (u, du) rows in block order.
template <Real T>
class StreamSource {
 public:
  virtual ~StreamSource() = default;
  virtual std::size_t length() const = 0;
  virtual std::size_t channels() const = 0;
  /// Fills rows [t0, t0 + count) into u and du (count x D each). Returns the
  /// number of rows actually produced; fewer than `count` means exhaustion.
  virtual std::size_t load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) = 0;
};

/// Consumes (y, dy) rows in block order.
template <Real T>
class StreamSink {
 public:
  virtual ~StreamSink() = default;
  virtual void consume(std::size_t t0, std::size_t count, std::span<const T> y, std::span<const T> dy) = 0;
};

/// Reads from caller-owned tensors; the caller accounts their bytes.
template <Real T>
class MemorySource final : public StreamSource<T> {
 public:
  MemorySource(const Tensor<T>& u, const Tensor<T>& du);
  std::size_t length() const override { return u_.dim(0); }
  std::size_t channels() const override { return u_.dim(1); }
  std::size_t load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) override;

 private:
  const Tensor<T>& u_;
  const Tensor<T>& du_;
};

/// Produces rows on demand: fill(t, u_row, du_row).
template <Real T>
class GeneratorSource final : public StreamSource<T> {
 public:
  using Fill = std::function<void(std::size_t t, std::span<T> u_row, std::span<T> du_row)>;
  GeneratorSource(std::size_t length, std::size_t channels, Fill fill)
      : length_(length), channels_(channels), fill_(std::move(fill)) {}
  std::size_t length() const override { return length_; }
  std::size_t channels() const override { return channels_; }
  std::size_t load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) override;

 private:
  std::size_t length_, channels_;
  Fill fill_;
};

/// Raw float64 u/du files with stream sidecars.
template <Real T>
class FileSource final : public StreamSource<T> {
 public:
  FileSource(const std::string& u_path, const std::string& du_path);
  std::size_t length() const override { return meta_.length; }
  std::size_t channels() const override { return meta_.channels; }
  std::size_t load(std::size_t t0, std::size_t count, std::span<T> u, std::span<T> du) override;

 private:
  io::StreamSidecar meta_;
  io::RawF64Reader u_in_, du_in_;
  std::vector<double> buf_;
  std::size_t next_ = 0;
};

/// Collects y, dy into [L x D] tensors allocated under `tag` (normally the io class).
template <Real T>
class MemorySink final : public StreamSink<T> {
 public:
  MemorySink(std::size_t length, std::size_t channels, MemTag tag = {})
      : y({length, channels}, tag), dy({length, channels}, tag) {}
  void consume(std::size_t t0, std::size_t count, std::span<const T> y_rows, std::span<const T> dy_rows) override;

  Tensor<T> y, dy;
};

template <Real T>
class DiscardSink final : public StreamSink<T> {
 public:
  void consume(std::size_t, std::size_t, std::span<const T>, std::span<const T>) override {}
};

template <Real T>
class CallbackSink final : public StreamSink<T> {
 public:
  using Fn = std::function<void(std::size_t t0, std::size_t count, std::span<const T> y, std::span<const T> dy)>;
  explicit CallbackSink(Fn fn) : fn_(std::move(fn)) {}
  void consume(std::size_t t0, std::size_t count, std::span<const T> y, std::span<const T> dy) override {
    fn_(t0, count, y, dy);
  }

 private:
  Fn fn_;
};

/// Writes y, dy as raw float64 files with stream sidecars.
template <Real T>
class FileSink final : public StreamSink<T> {
 public:
  FileSink(const std::string& y_path, const std::string& dy_path, std::size_t length, std::size_t channels);
  void consume(std::size_t t0, std::size_t count, std::span<const T> y, std::span<const T> dy) override;
  /// Flushes and writes sidecars. Called by the destructor if not called explicitly.
  void close();
  ~FileSink() override;

 private:
  std::string y_path_, dy_path_;
  io::StreamSidecar meta_;
  io::RawF64Writer y_out_, dy_out_;
  std::vector<double> buf_;
  bool closed_ = false;
};

struct RunStats {
  std::size_t blocks = 0;
  std::size_t peak_graph_bytes = 0;
  std::size_t peak_io_bytes = 0;
  std::size_t peak_total_bytes = 0;
  /// Live graph bytes at each block boundary after handoff; constant across blocks.
  std::size_t boundary_graph_bytes = 0;
  std::vector<double> block_seconds;
};

template <Real T>
struct ToseResult {
  DualState<T> final_state;
  RunStats stats;
};

/// Value copy of a dual state under `tag`, sharing no buffers with `s`.
template <Real T>
DualState<T> handoff(const DualState<T>& s, MemTag tag);

template <Real T>
DualState<T> handoff(const DualState<T>& s) {
  return handoff(s, s.h.tag());
}

struct ToseOptions {
  ScanMode mode = ScanMode::fold;
  /// Record per-block wall times in RunStats.
  bool time_blocks = true;
};

/// Streams the JVP over `plan`. `meter` may be null (a private meter is used).
/// `initial` defaults to (h, dh) = (0, 0).
template <Real T>
ToseResult<T> run_tose(const GlrParams<T>& p, StreamSource<T>& source, StreamSink<T>& sink, const BlockPlan& plan,
                       MemoryMeter* meter, const DualState<T>* initial = nullptr, ToseOptions opts = {});

}  // namespace pgf
