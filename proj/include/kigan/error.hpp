#pragma once

#include <stdexcept>
#include <string>

namespace kigan {

// Error taxonomy. Exit-code mapping for the CLI:
//   usage/config -> 1, data-shaped problems -> 2, numeric problems -> 3.
enum class error_kind {
  usage,      // bad flags / arguments
  config,     // invalid or mismatched configuration
  data,       // missing/empty datasets, coverage gaps
  schema,     // CSV header problems
  parse,      // malformed field content
  format,     // corrupt/truncated binary files
  version,    // unsupported file version
  numeric,    // non-finite values
  dimension,  // tensor shape mismatches
  index,      // out-of-range lookups
};

class error : public std::runtime_error {
 public:
  error(error_kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  error_kind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case error_kind::usage:
      case error_kind::config:
        return 1;
      case error_kind::data:
      case error_kind::schema:
      case error_kind::parse:
      case error_kind::format:
      case error_kind::version:
        return 2;
      case error_kind::numeric:
      case error_kind::dimension:
      case error_kind::index:
        return 3;
    }
    return 3;
  }

 private:
  error_kind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw error(error_kind::usage, msg); }
[[noreturn]] inline void throw_config(const std::string& msg) { throw error(error_kind::config, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw error(error_kind::data, msg); }
[[noreturn]] inline void throw_schema(const std::string& msg) { throw error(error_kind::schema, msg); }
[[noreturn]] inline void throw_parse(const std::string& msg) { throw error(error_kind::parse, msg); }
[[noreturn]] inline void throw_format(const std::string& msg) { throw error(error_kind::format, msg); }
[[noreturn]] inline void throw_version(const std::string& msg) { throw error(error_kind::version, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw error(error_kind::numeric, msg); }
[[noreturn]] inline void throw_dimension(const std::string& msg) { throw error(error_kind::dimension, msg); }
[[noreturn]] inline void throw_index(const std::string& msg) { throw error(error_kind::index, msg); }

}  // namespace kigan
