// SPDX-License-Identifier: Apache-2.0
#include "pgf/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <nlohmann/json.hpp>

namespace pgf::io {
namespace {

void encode_le(double v, unsigned char* out) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>(bits >> (8 * i));
}

double decode_le(const unsigned char* in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sidecar " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed sidecar " + path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void check_dtype(const nlohmann::json& j, const std::string& path) {
  if (j.value("dtype", std::string{}) != "float64") throw Error("sidecar " + path + ": dtype must be float64");
}

}  // namespace

std::string sidecar_path(const std::string& data_path) { return data_path + ".json"; }

void write_stream_sidecar(const std::string& data_path, const StreamSidecar& s) {
  write_json(sidecar_path(data_path), {{"L", s.length}, {"D", s.channels}, {"dtype", s.dtype}});
}

StreamSidecar read_stream_sidecar(const std::string& data_path) {
  const auto path = sidecar_path(data_path);
  const auto j = read_json(path);
  check_dtype(j, path);
  if (!j.contains("L") || !j.contains("D")) throw Error("sidecar " + path + ": missing L or D");
  return {j.at("L").get<std::size_t>(), j.at("D").get<std::size_t>(), "float64"};
}

void write_tensor(const std::string& data_path, const Tensor<double>& values) {
  RawF64Writer w(data_path);
  w.write(values.span());
  w.close();
  std::vector<std::size_t> shape;
  for (int i = 0; i < values.shape().rank; ++i) shape.push_back(values.dim(i));
  write_json(sidecar_path(data_path), {{"shape", shape}, {"dtype", "float64"}});
}

Tensor<double> read_tensor(const std::string& data_path) {
  const auto path = sidecar_path(data_path);
  const auto j = read_json(path);
  check_dtype(j, path);
  const auto dims = j.at("shape").get<std::vector<std::size_t>>();
  if (dims.empty() || dims.size() > 3) throw Error("sidecar " + path + ": shape must have rank 1..3");
  Shape shape;
  shape.rank = static_cast<int>(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) shape.dims[i] = dims[i];
  Tensor<double> t(shape);
  RawF64Reader r(data_path);
  if (r.read(t.span()) != t.size()) throw Error(data_path + ": fewer values than the sidecar shape");
  return t;
}

RawF64Reader::RawF64Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open " + path);
}

std::size_t RawF64Reader::read(std::span<double> out) {
  buf_.resize(out.size() * 8);
  in_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  const auto got = static_cast<std::size_t>(in_.gcount()) / 8;
  for (std::size_t i = 0; i < got; ++i) out[i] = decode_le(buf_.data() + 8 * i);
  return got;
}

RawF64Writer::RawF64Writer(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot write " + path);
}

void RawF64Writer::write(std::span<const double> values) {
  buf_.resize(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) encode_le(values[i], buf_.data() + 8 * i);
  out_.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out_) throw Error("write failed: " + path_);
}

void RawF64Writer::close() {
  out_.close();
  if (out_.fail()) throw Error("close failed: " + path_);
}

}  // namespace pgf::io
