#pragma once

#include <cstddef>
#include <exception>
#include <string>
#include <utility>

namespace pinnkit {

/// Base of every error raised by the library. The message can be prefixed
/// with context (e.g. the owning pipeline node) while the dynamic type is
/// preserved, so callers can still catch the specific kind.
class Error : public std::exception {
 public:
  explicit Error(std::string msg) : msg_(std::move(msg)) {}
  const char* what() const noexcept override { return msg_.c_str(); }
  void add_context(const std::string& ctx) { msg_ = ctx + ": " + msg_; }

 private:
  std::string msg_;
};

#define PINNKIT_DEFINE_ERROR(Name)                          \
  class Name : public Error {                               \
   public:                                                  \
    explicit Name(std::string msg) : Error(std::move(msg)) {} \
  };

PINNKIT_DEFINE_ERROR(DimensionError)
PINNKIT_DEFINE_ERROR(NumericError)
PINNKIT_DEFINE_ERROR(ContractError)
PINNKIT_DEFINE_ERROR(UnresolvedSymbolError)
PINNKIT_DEFINE_ERROR(UnreachableTargetError)
PINNKIT_DEFINE_ERROR(CycleError)
PINNKIT_DEFINE_ERROR(EmptyRegionError)
PINNKIT_DEFINE_ERROR(DomainError)
PINNKIT_DEFINE_ERROR(CheckpointIncompatibleError)
PINNKIT_DEFINE_ERROR(CheckpointParseError)

#undef PINNKIT_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line, std::size_t column)
      : Error(msg + " at line " + std::to_string(line) + ", column " +
              std::to_string(column)),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class NonFiniteGradientError : public Error {
 public:
  NonFiniteGradientError(const std::string& msg, long iteration)
      : Error(msg + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace pinnkit
