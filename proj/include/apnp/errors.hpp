#pragma once

#include <stdexcept>
#include <string>

namespace apnp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands disagree, or a kernel does not fit an image.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A closed-form solve hit a (numerically) singular frequency or block.
class IllPosedError : public Error {
 public:
  using Error::Error;
};

/// Denoiser domain (gradient/image) does not match its input.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Image file could not be decoded into an 8-bit grayscale image.
class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace apnp
