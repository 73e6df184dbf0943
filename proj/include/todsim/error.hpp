#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace todsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed serialized call/schema/response, or a bad line in a data file.
/// `position` is a character offset for grammar errors and a 1-based line
/// number for file errors.
class ParseError : public Error {
public:
    ParseError(std::size_t position, std::string reason)
        : Error("parse error at " + std::to_string(position) + ": " + reason),
          position_(position),
          reason_(std::move(reason)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t position_;
    std::string reason_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class UnknownIntent : public Error {
public:
    explicit UnknownIntent(const std::string& intent) : Error("unknown intent: " + intent) {}
};

class SchemaMismatch : public Error {
public:
    using Error::Error;
};

class AgentUnavailable : public Error {
public:
    using Error::Error;
};

class MalformedGrounding : public Error {
public:
    using Error::Error;
};

class InvalidDistribution : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class DegenerateBase : public Error {
public:
    DegenerateBase() : Error("error reduction undefined for a perfect baseline") {}
};

class InvalidCounts : public Error {
public:
    using Error::Error;
};

class TrainerFailed : public Error {
public:
    using Error::Error;
};

class MissingEpisode : public Error {
public:
    MissingEpisode(const std::string& system, const std::string& goal)
        : Error("system '" + system + "' has no episode for goal " + goal) {}
};

}  // namespace todsim
