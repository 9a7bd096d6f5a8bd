#pragma once

#include <stdexcept>
#include <string>

namespace phmm {

// Base of every error raised by the library. Each subclass names one failure
// category so callers (and the CLI) can react without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidLabel : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DegenerateScheme : public Error {
 public:
  using Error::Error;
};

// Total likelihood is zero: every hidden path is ruled out.
class InfeasibleModel : public Error {
 public:
  using Error::Error;
};

class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

class IdentifiabilityError : public Error {
 public:
  using Error::Error;
};

class FitFailure : public Error {
 public:
  using Error::Error;
};

class CannotSplit : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ChannelMissing : public Error {
 public:
  using Error::Error;
};

class DegenerateDive : public Error {
 public:
  using Error::Error;
};

class CannotCalibrate : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

}  // namespace phmm
