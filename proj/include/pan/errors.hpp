#pragma once

#include <stdexcept>
#include <string>

namespace pan {

// Bad configuration: unknown keys, invalid hyperparameters, unknown modes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything wrong with input data or files on disk.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

class VocabError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an API contract, e.g. passed a forward cache built from
// different parameters.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace pan
