#ifndef PTK_ERROR_HPP
#define PTK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ptk {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A document failed validation. `path` is a JSON-pointer-like location.
class SchemaError : public Error {
public:
  SchemaError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

/// A policy gate refused the operation (unauthorized target, unresolved
/// findings at closure). The CLI maps this to exit code 3.
class PolicyError : public Error {
public:
  using Error::Error;
};

}  // namespace ptk

#endif  // PTK_ERROR_HPP
