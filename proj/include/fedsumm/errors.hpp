#pragma once

#include <stdexcept>
#include <string>

namespace fedsumm {

// Invalid configuration, bad dimensions, rejected input schema. The CLI maps
// these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file content (carries the offending line where known).
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Structurally valid input whose fields are inconsistent with each other.
class SchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Non-finite values produced or consumed by numeric code.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cross-module contract violations at runtime (mismatched dims between
// clients, out-of-range ranks, empty report sets).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric requested for a model that cannot provide it.
class UnsupportedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedsumm
