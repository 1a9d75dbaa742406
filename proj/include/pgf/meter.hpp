// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace pgf {

/// Buffer classes the meter partitions live bytes into.
///   graph        differentiation working set (per-block operators, carried states,
///                stored trajectories of the unrolled oracle)
///   io           input/output payload (u, du, y, dy tensors held in memory)
///   accumulator  parameter-gradient accumulators
enum class MemClass : std::uint8_t { graph = 0, io = 1, accumulator = 2 };

inline constexpr std::size_t kMemClassCount = 3;

std::string_view to_string(MemClass c);

/// Ledger of logical buffer registrations. Tracks live and peak bytes per class
/// and for the total. Not thread-safe: one writer per run.
class MemoryMeter {
 public:
  struct Event {
    std::uint64_t seq;  // logical timestamp, deterministic
    bool is_track;
    MemClass cls;
    std::size_t bytes;
    std::size_t live;  // class live bytes after the event
    std::size_t peak;  // class peak bytes after the event
  };

  explicit MemoryMeter(bool record_events = false) : record_events_(record_events) {}

  void track(MemClass cls, std::size_t bytes);
  /// Throws std::logic_error when releasing more than is live in the class.
  void release(MemClass cls, std::size_t bytes);

  std::size_t live(MemClass cls) const { return live_[index(cls)]; }
  std::size_t peak(MemClass cls) const { return peak_[index(cls)]; }
  std::size_t live_total() const { return live_total_; }
  std::size_t peak_total() const { return peak_total_; }
  bool balanced() const { return live_total_ == 0; }

  /// Resets peaks to current live values; the event log is kept.
  void reset_peaks();

  const std::vector<Event>& events() const { return events_; }
  /// CSV columns: timestamp,op,class,bytes,live,peak
  void write_events_csv(std::ostream& os) const;

 private:
  static std::size_t index(MemClass c) { return static_cast<std::size_t>(c); }

  bool record_events_;
  std::uint64_t seq_ = 0;
  std::array<std::size_t, kMemClassCount> live_{};
  std::array<std::size_t, kMemClassCount> peak_{};
  std::size_t live_total_ = 0;
  std::size_t peak_total_ = 0;
  std::vector<Event> events_;
};

/// Where a buffer's bytes are accounted. A null meter means untracked.
struct MemTag {
  MemoryMeter* meter = nullptr;
  MemClass cls = MemClass::graph;
};

/// RAII registration of `bytes` with a meter.
class MeterLease {
 public:
  MeterLease() = default;
  MeterLease(MemTag tag, std::size_t bytes);
  ~MeterLease();

  MeterLease(const MeterLease&) = delete;
  MeterLease& operator=(const MeterLease&) = delete;
  MeterLease(MeterLease&& other) noexcept;
  MeterLease& operator=(MeterLease&& other) noexcept;

  MemTag tag() const { return tag_; }
  std::size_t bytes() const { return bytes_; }
  void reset();

 private:
  MemTag tag_{};
  std::size_t bytes_ = 0;
};

}  // namespace pgf
