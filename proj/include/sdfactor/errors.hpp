#pragma once

#include <stdexcept>
#include <string>

namespace sdfactor {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EigenvalueBelowFloor : public Error {
 public:
  EigenvalueBelowFloor(int index, double value)
      : Error("eigenvalue " + std::to_string(index) + " = " + std::to_string(value) +
              " below positive-definiteness floor"),
        index(index),
        value(value) {}
  int index;
  double value;
};

class InvalidPermutation : public Error {
 public:
  using Error::Error;
};

class SingularTransform : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class IncompatibleShape : public Error {
 public:
  using Error::Error;
};

class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

class AssumptionViolated : public Error {
 public:
  using Error::Error;
};

class RankDeficientData : public Error {
 public:
  using Error::Error;
};

class AllRestartsFailed : public Error {
 public:
  using Error::Error;
};

class NestingViolation : public Error {
 public:
  using Error::Error;
};

class ExcessiveFailureRate : public Error {
 public:
  using Error::Error;
};

class CsvError : public Error {
 public:
  CsvError(const std::string& what, long row, long col)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(col) + ")"),
        row(row),
        col(col) {}
  long row;
  long col;
};

}  // namespace sdfactor
