// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace deepkd {

// Thrown when an estimator is queried before it has recorded enough data.
class NotReadyError : public std::runtime_error {
 public:
  explicit NotReadyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file. The message carries the path and, when known, the
// line number or byte offset of the first offending token.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
};

// Invalid or inconsistent run configuration (bad key, bad value, missing
// input required by the selected mode).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace deepkd
