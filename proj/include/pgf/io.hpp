// SPDX-License-Identifier: Apache-2.0
//
// On-disk tensor format: raw little-endian float64, row-major, one file per tensor,
// plus a JSON sidecar `<file>.json`.
//   stream tensors [t, d]:   {"L": L, "D": D, "dtype": "float64"}
//   other tensors:           {"shape": [r, c], "dtype": "float64"}
#pragma once

#include <cstddef>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pgf/common.hpp"
#include "pgf/tensor.hpp"

namespace pgf::io {

struct StreamSidecar {
  std::size_t length = 0;    // L
  std::size_t channels = 0;  // D
  std::string dtype = "float64";
};

std::string sidecar_path(const std::string& data_path);

void write_stream_sidecar(const std::string& data_path, const StreamSidecar& s);
StreamSidecar read_stream_sidecar(const std::string& data_path);

/// Writes `values` plus a {"shape": ..., "dtype": "float64"} sidecar.
void write_tensor(const std::string& data_path, const Tensor<double>& values);
Tensor<double> read_tensor(const std::string& data_path);

/// Sequential little-endian float64 reader.
class RawF64Reader {
 public:
  explicit RawF64Reader(const std::string& path);
  /// Reads up to out.size() values; returns how many were read.
  std::size_t read(std::span<double> out);

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<unsigned char> buf_;
};

/// Sequential little-endian float64 writer.
class RawF64Writer {
 public:
  explicit RawF64Writer(const std::string& path);
  void write(std::span<const double> values);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<unsigned char> buf_;
};

}  // namespace pgf::io
