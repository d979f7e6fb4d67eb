#pragma once

#include <stdexcept>
#include <string>

namespace vqr {

/// Coarse failure class; the CLI maps each class to an exit code
/// (contract -> 1, usage -> 2, io -> 3).
enum class ErrorClass { contract, usage, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string msg) : std::runtime_error(std::move(msg)), cls_(cls) {}
  ErrorClass error_class() const { return cls_; }
  int exit_code() const {
    switch (cls_) {
      case ErrorClass::usage: return 2;
      case ErrorClass::io: return 3;
      default: return 1;
    }
  }

 private:
  ErrorClass cls_;
};

// Shape disagreement between tensor operands.
struct DimensionError : Error {
  explicit DimensionError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// Out-of-range lookup (class index, embedding id, slice bound).
struct IndexError : Error {
  explicit IndexError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// A scalar argument outside its legal range (dropout rate, axis, quality tag).
struct ParameterError : Error {
  explicit ParameterError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// Malformed runtime input (empty sequence, empty dataset).
struct InputError : Error {
  explicit InputError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// Violated API contract (tape reuse, fingerprint mismatch, flag/shape drift).
struct ContractError : Error {
  explicit ContractError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// Infeasible generator/experiment configuration; user-fixable, so usage class.
struct ConfigError : Error {
  explicit ConfigError(std::string msg) : Error(ErrorClass::usage, std::move(msg)) {}
};

// Bad command-line arguments.
struct UsageError : Error {
  explicit UsageError(std::string msg) : Error(ErrorClass::usage, std::move(msg)) {}
};

// Filesystem and file-format failures.
struct IoError : Error {
  explicit IoError(std::string msg) : Error(ErrorClass::io, std::move(msg)) {}
};

// Token stream that does not parse (program text, score files).
struct ParseError : Error {
  explicit ParseError(std::string msg) : Error(ErrorClass::io, std::move(msg)) {}
};

// Question outside the template language.
struct TranslationError : Error {
  explicit TranslationError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// query/relate/compare applied to a non-singleton object set.
struct AmbiguityError : Error {
  explicit AmbiguityError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

// Score sets with mismatched question ids.
struct AlignmentError : Error {
  explicit AlignmentError(std::string msg) : Error(ErrorClass::contract, std::move(msg)) {}
};

}  // namespace vqr
