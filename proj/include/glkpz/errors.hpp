#pragma once

#include <stdexcept>
#include <string>

namespace glkpz {

enum class ErrorKind {
  domain,
  numeric,
  range,
  config,
  unsupported,
  index,
  instability,
  window,
  shape,
  io,
  consistency,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_kind_name(kind)) + " error: " + msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace glkpz
