#pragma once

#include <stdexcept>
#include <string>

namespace pgr {

// Base for all toolkit errors. Subclasses map to CLI exit codes:
// input_error -> 2, domain_error -> 3.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files, unreadable paths, bad arguments.
class input_error : public error {
 public:
  explicit input_error(const std::string& msg) : error(msg) {}
};

// Parse failure at a known line of a text file.
class parse_error : public input_error {
 public:
  parse_error(const std::string& path, long line, const std::string& what)
      : input_error(path + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Numerical or domain violations (empty masks, non-finite results,
// geometry outside the map).
class domain_error : public error {
 public:
  explicit domain_error(const std::string& msg) : error(msg) {}
};

}  // namespace pgr
