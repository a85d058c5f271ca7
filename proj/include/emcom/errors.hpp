#pragma once

#include <stdexcept>
#include <string>

namespace emcom {

// Error taxonomy, mapped to CLI exit codes in tools/emcom_main.cpp:
//   ConfigError   -> 2 (bad config file, constraint violation, bad CLI usage)
//   UsageError    -> 2 (operation called with invalid arguments/state)
//   NumericError  -> 3 (non-finite values mid-computation, training abort)
//   ArtifactError -> 4 (missing or corrupt run artifacts)

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public std::runtime_error {
public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class ArtifactError : public std::runtime_error {
public:
  explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace emcom
