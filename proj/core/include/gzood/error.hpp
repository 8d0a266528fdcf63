#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gzood {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

/// Rejection sampler exhausted its proposal budget.
class SamplingFailure : public Error {
 public:
  SamplingFailure(const std::string& what, double kappa) : Error(what), kappa_(kappa) {}
  double kappa() const { return kappa_; }

 private:
  double kappa_;
};

/// A metric cannot be computed from the given labels (e.g. only one class present).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// Loss or parameters became non-finite during optimization.
class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, long batch_index, std::string component)
      : Error(what), batch_index_(batch_index), component_(std::move(component)) {}
  long batch_index() const { return batch_index_; }
  const std::string& component() const { return component_; }

 private:
  long batch_index_;
  std::string component_;
};

/// Problems with dataset bundles and other on-disk inputs.
class DataError : public Error {
 public:
  enum class Kind { MissingFile, ShapeMismatch, OverlappingSplits, LabelOutOfRange, IndexOutOfRange, Malformed };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class MissingClass : public Error {
 public:
  MissingClass(const std::string& what, int class_id) : Error(what), class_id_(class_id) {}
  int class_id() const { return class_id_; }

 private:
  int class_id_;
};

/// An external prediction source does not cover every required test row.
class MissingPrediction : public Error {
 public:
  MissingPrediction(const std::string& what, std::vector<long> rows) : Error(what), rows_(std::move(rows)) {}
  const std::vector<long>& rows() const { return rows_; }

 private:
  std::vector<long> rows_;
};

}  // namespace gzood
