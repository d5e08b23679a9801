#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace desalign {

/// Shape, symmetry or index contract violated by the caller.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed (non-SPD pivot, non-finite loss, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the offending 1-based line number (0 when
/// the problem is not tied to a single line).
class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid experiment configuration or command-line usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace desalign
