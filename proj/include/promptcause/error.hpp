#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptcause {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A malformed record in an input file.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& what)
      : Error("line " + std::to_string(line) + ": field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(const std::string& id)
      : Error("records, features and metrics are not aligned at id '" + id + "'"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class EmptyMatrixError : public Error {
 public:
  EmptyMatrixError() : Error("observation matrix has no usable rows") {}
};

class SandboxError : public Error {
 public:
  using Error::Error;
};

class TooFewSolutions : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class EmptyResponse : public Error {
 public:
  using Error::Error;
};

class UnknownNode : public Error {
 public:
  explicit UnknownNode(const std::string& name) : Error("unknown node '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class OverlappingSets : public Error {
 public:
  using Error::Error;
};

class CycleAfterPrune : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class NotIdentifiable : public Error {
 public:
  using Error::Error;
};

class EmptyStratum : public Error {
 public:
  using Error::Error;
};

class UnknownMetric : public Error {
 public:
  explicit UnknownMetric(const std::string& name) : Error("unknown objective metric '" + name + "'") {}
};

class StageInputMissing : public Error {
 public:
  StageInputMissing(const std::string& stage, const std::string& path)
      : Error("stage '" + stage + "' is missing input " + path), stage_(stage), path_(path) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string stage_;
  std::string path_;
};

}  // namespace promptcause
