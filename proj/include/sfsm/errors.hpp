#pragma once

#include <stdexcept>
#include <string>

namespace sfsm {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point at or behind the optical-center plane, or a vanishing projection denominator.
class DegenerateDepth : public Error {
 public:
  using Error::Error;
};

class NonPositiveDepth : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InsufficientCorrespondences : public Error {
 public:
  using Error::Error;
};

class RansacFailure : public Error {
 public:
  using Error::Error;
};

class Step1Failure : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class Step2Failure : public Error {
 public:
  using Error::Error;
};

class Step3Failure : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Estimated motion too small to normalize the scale gauge.
class DegenerateScale : public Error {
 public:
  using Error::Error;
};

}  // namespace sfsm
