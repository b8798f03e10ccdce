#pragma once

#include <stdexcept>
#include <string>

namespace hte {

// Error hierarchy shared by the library and the command line tool.  The
// exit_code of the most derived class becomes the process exit status when an
// exception escapes a CLI subcommand:
//
//   ValidationError -> 2   (bad input: schema, parse, domain, leakage, ...)
//   NumericError    -> 3   (singular design, separation, non-convergence, ...)
//   IoError         -> 4   (missing/unreadable/unwritable files)
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const noexcept { return 1; }
};

class ValidationError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace hte
