#pragma once

#include <stdexcept>
#include <string>

namespace ctcbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or schema.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// I/O failure (missing file, unwritable directory, undecodable image).
class IoError : public Error {
public:
  using Error::Error;
};

/// A statistic is undefined for the given input (e.g. zero spread).
class DegenerateError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Wraps a failure with the pipeline stage it happened in.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace ctcbench
