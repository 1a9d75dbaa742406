// SPDX-License-Identifier: Apache-2.0
#include "pgf/meter.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <stdexcept>
#include <string>

namespace pgf {

std::string_view to_string(MemClass c) {
  switch (c) {
    case MemClass::graph:
      return "graph";
    case MemClass::io:
      return "io";
    case MemClass::accumulator:
      return "accumulator";
  }
  return "unknown";
}

void MemoryMeter::track(MemClass cls, std::size_t bytes) {
  if (bytes == 0) return;
  const auto i = index(cls);
  live_[i] += bytes;
  peak_[i] = std::max(peak_[i], live_[i]);
  live_total_ += bytes;
  peak_total_ = std::max(peak_total_, live_total_);
  if (record_events_) events_.push_back({seq_, true, cls, bytes, live_[i], peak_[i]});
  ++seq_;
}

void MemoryMeter::release(MemClass cls, std::size_t bytes) {
  if (bytes == 0) return;
  const auto i = index(cls);
  if (bytes > live_[i]) {
    throw std::logic_error("MemoryMeter: unbalanced release of " + std::to_string(bytes) +
                           " bytes in class " + std::string(to_string(cls)) + " (live " +
                           std::to_string(live_[i]) + ")");
  }
  live_[i] -= bytes;
  live_total_ -= bytes;
  if (record_events_) events_.push_back({seq_, false, cls, bytes, live_[i], peak_[i]});
  ++seq_;
}

void MemoryMeter::reset_peaks() {
  peak_ = live_;
  peak_total_ = live_total_;
}

void MemoryMeter::write_events_csv(std::ostream& os) const {
  os << "timestamp,op,class,bytes,live,peak\n";
  for (const auto& e : events_) {
    os << e.seq << ',' << (e.is_track ? "track" : "release") << ',' << to_string(e.cls) << ','
       << e.bytes << ',' << e.live << ',' << e.peak << '\n';
  }
}

MeterLease::MeterLease(MemTag tag, std::size_t bytes) : tag_(tag), bytes_(bytes) {
  if (tag_.meter != nullptr) tag_.meter->track(tag_.cls, bytes_);
}

MeterLease::~MeterLease() { reset(); }

MeterLease::MeterLease(MeterLease&& other) noexcept : tag_(other.tag_), bytes_(other.bytes_) {
  other.tag_.meter = nullptr;
  other.bytes_ = 0;
}

MeterLease& MeterLease::operator=(MeterLease&& other) noexcept {
  if (this != &other) {
    reset();
    tag_ = other.tag_;
    bytes_ = other.bytes_;
    other.tag_.meter = nullptr;
    other.bytes_ = 0;
  }
  return *this;
}

void MeterLease::reset() {
  if (tag_.meter != nullptr) {
    try {
      tag_.meter->release(tag_.cls, bytes_);
    } catch (const std::logic_error& e) {
      // A lease only releases what it tracked; reaching here means the meter was
      // manipulated directly. Instrumentation bug.
      std::fprintf(stderr, "%s\n", e.what());
      std::abort();
    }
  }
  tag_.meter = nullptr;
  bytes_ = 0;
}

}  // namespace pgf
