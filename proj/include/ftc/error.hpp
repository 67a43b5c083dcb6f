#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace ftc {

/// A caller broke a documented precondition (shape, range, or ordering).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A forward pass produced a non-finite activation.
class NumericalFailure : public std::runtime_error {
public:
  NumericalFailure(std::size_t layer, const std::string& what)
      : std::runtime_error(what), layer_(layer) {}

  std::size_t layer() const { return layer_; }

private:
  std::size_t layer_;
};

/// Malformed or inconsistent input data. Carries the file and 1-based line
/// when the problem was found while parsing.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(std::string file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

private:
  std::string file_;
  std::size_t line_ = 0;
};

namespace detail {

template <typename... Args>
[[noreturn]] void contract_fail(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw ContractViolation(os.str());
}

template <typename... Args>
void require(bool ok, const Args&... args) {
  if (!ok) contract_fail(args...);
}

}  // namespace detail
}  // namespace ftc
