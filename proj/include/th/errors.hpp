#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace th {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value does not fit the bit field it is being packed into.
class EncodingError : public Error {
 public:
  EncodingError(std::string field, std::uint64_t value, unsigned width)
      : Error("field '" + field + "' value " + std::to_string(value) +
              " does not fit in " + std::to_string(width) + " bits"),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// The trace stream cannot be framed any further (truncated record or a
/// record violating the wire invariants). Ingestion stops.
class FramingError : public Error {
 public:
  FramingError(const std::string& what, std::uint64_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A well-framed record of an event class the detector does not consume.
/// The stream continues with the next record.
class SkipRecordError : public Error {
 public:
  explicit SkipRecordError(std::uint8_t event_class)
      : Error("unknown event class " + std::to_string(event_class)), event_class_(event_class) {}

  std::uint8_t event_class() const noexcept { return event_class_; }

 private:
  std::uint8_t event_class_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class ArchiveError : public Error {
 public:
  using Error::Error;
};

}  // namespace th
