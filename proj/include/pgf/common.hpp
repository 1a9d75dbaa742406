// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace pgf {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input or state contains NaN/Inf. The message names the first offending index.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A streaming source ran out of data before the plan was covered.
class SourceExhaustedError : public Error {
 public:
  using Error::Error;
};

enum class Activation { identity, silu };
enum class Discretization { zoh, euler };
enum class Precision { f32, f64 };

std::string to_string(Activation a);
std::string to_string(Discretization d);
std::string to_string(Precision p);
Activation parse_activation(const std::string& s);
Discretization parse_discretization(const std::string& s);
Precision parse_precision(const std::string& s);

}  // namespace pgf
