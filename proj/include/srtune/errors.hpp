#ifndef SRTUNE_ERRORS_HPP
#define SRTUNE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace srtune {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input: the caller can fix it. The CLI maps these to exit code 2.
class ValidationError : public Error {
public:
  using Error::Error;
};

class GeometryError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ResolutionError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class TableError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class InputError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class MaskError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class DegenerateInputError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class DescriptorError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class NiftiError : public ValidationError {
public:
  enum class Kind { bad_magic, bad_header, unsupported_datatype, truncated, io };

  NiftiError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

/// Non-finite values appeared inside an iterative solver.
class DivergenceError : public Error {
public:
  DivergenceError(int iteration, const std::string& what)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

private:
  int iteration_;
};

} // namespace srtune

#endif // SRTUNE_ERRORS_HPP
