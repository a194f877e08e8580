#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace compass {

// Base for every error the library raises. Callers that only need a message
// can catch this; the subclasses carry the structured details.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed JSON (or other byte-level syntax problem).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset);
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Well-formed document that does not match the expected schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string field, std::ptrdiff_t record_index = -1);
  const std::string& field() const noexcept { return field_; }
  // -1 when the error is not tied to a record.
  std::ptrdiff_t record_index() const noexcept { return record_index_; }

 private:
  std::string field_;
  std::ptrdiff_t record_index_;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class EmptyTraceError : public InvariantError {
 public:
  EmptyTraceError() : InvariantError("trace contains no spans") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class UnknownErrorTypeError : public Error {
 public:
  UnknownErrorTypeError(const std::string& query, std::vector<std::string> suggestions);
  const std::vector<std::string>& suggestions() const noexcept { return suggestions_; }

 private:
  std::vector<std::string> suggestions_;
};

class AmbiguousErrorTypeError : public Error {
 public:
  AmbiguousErrorTypeError(const std::string& query, std::vector<std::string> candidates);
  const std::vector<std::string>& candidates() const noexcept { return candidates_; }

 private:
  std::vector<std::string> candidates_;
};

class UnmappedLeafError : public Error {
 public:
  explicit UnmappedLeafError(std::vector<std::string> leaves);
  const std::vector<std::string>& leaves() const noexcept { return leaves_; }

 private:
  std::vector<std::string> leaves_;
};

class ScriptKeyError : public Error {
 public:
  explicit ScriptKeyError(std::string key);
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class EmbeddingUnavailableError : public Error {
 public:
  using Error::Error;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

class MemoryWriteError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace compass
