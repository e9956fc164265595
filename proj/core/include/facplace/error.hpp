#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace facplace {

// Process exit codes used by the command-line tool.
enum class ErrorKind : int {
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kIncompleteRun = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class IncompleteRunError : public Error {
 public:
  explicit IncompleteRunError(const std::string& what)
      : Error(ErrorKind::kIncompleteRun, what) {}
};

// Raised by linking when distinct faculty records share a canonical name.
class AmbiguousNameError : public DataError {
 public:
  struct Collision {
    std::string canonical_name;
    std::vector<std::string> raw_names;
  };

  AmbiguousNameError(const std::string& what, std::vector<Collision> collisions)
      : DataError(what), collisions_(std::move(collisions)) {}

  const std::vector<Collision>& collisions() const noexcept { return collisions_; }

 private:
  std::vector<Collision> collisions_;
};

}  // namespace facplace
