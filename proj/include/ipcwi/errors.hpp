#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ipcwi {

// Exit-code families used by the CLI: input = 1, model = 2, numerical = 3.

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (alpha outside
// (0,1), bad index, dimension mismatch).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerTraceEntry {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
};

class ConvergenceError : public ModelError {
 public:
  ConvergenceError(const std::string& what, std::vector<OptimizerTraceEntry> trace)
      : ModelError(what), trace_(std::move(trace)) {}
  const std::vector<OptimizerTraceEntry>& trace() const { return trace_; }

 private:
  std::vector<OptimizerTraceEntry> trace_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ipcwi
