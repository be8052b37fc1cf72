#pragma once

#include <stdexcept>
#include <string>

namespace cotc {

// Base for all toolkit errors. Subtypes exist so callers can catch the
// specific failure they care about; everything still lands in std::exception.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error(what) {}
};

class UngradeableGold : public Error {
 public:
  explicit UngradeableGold(const std::string& what) : Error(what) {}
};

class TokenizerUnavailable : public Error {
 public:
  explicit TokenizerUnavailable(const std::string& what) : Error(what) {}
};

class MaskExceedsSteps : public Error {
 public:
  explicit MaskExceedsSteps(const std::string& what) : Error(what) {}
};

class InvalidBaseline : public Error {
 public:
  explicit InvalidBaseline(const std::string& what) : Error(what) {}
};

class GroupTooSmall : public Error {
 public:
  explicit GroupTooSmall(const std::string& what) : Error(what) {}
};

class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& what) : Error(what) {}
};

class MissingReferenceLogprobs : public Error {
 public:
  explicit MissingReferenceLogprobs(const std::string& what) : Error(what) {}
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& what) : Error(what) {}
};

class DivergenceDetected : public Error {
 public:
  explicit DivergenceDetected(const std::string& what) : Error(what) {}
};

class PlateauNeverReached : public Error {
 public:
  explicit PlateauNeverReached(const std::string& what) : Error(what) {}
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line_no(line_no) {}
  std::size_t line_no;
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(what) {}
};

class PartialGroup : public Error {
 public:
  explicit PartialGroup(const std::string& what) : Error(what) {}
};

class IdMismatch : public Error {
 public:
  explicit IdMismatch(const std::string& what) : Error(what) {}
};

class EmptyTestset : public Error {
 public:
  explicit EmptyTestset(const std::string& what) : Error(what) {}
};

class DivisionByZero : public Error {
 public:
  explicit DivisionByZero(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace cotc
