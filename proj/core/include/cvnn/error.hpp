#pragma once

#include <stdexcept>
#include <string>

namespace cvnn {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Division by an exact zero.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, std::size_t index) : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// A recorded primitive that no evaluator knows about.
class UnsupportedOpError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (e.g. a complex-valued loss).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad or unknown configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt index maps or files.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Batch statistics requested from a batch of one.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// Loss became non-finite or exceeded the divergence threshold.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvnn
