#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pla {

/// Base class for every error this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- scene text format ---

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, const std::string& reason)
        : Error("syntax error at line " + std::to_string(line) + ": " + reason),
          line(line),
          reason(reason) {}

    std::size_t line;
    std::string reason;
};

class InvariantViolation : public Error {
public:
    InvariantViolation(const std::string& field, const std::string& got, const std::string& expected)
        : Error("invariant violation on '" + field + "': got " + got + ", expected " + expected),
          field(field),
          got(got),
          expected(expected) {}

    std::string field;
    std::string got;
    std::string expected;
};

class DegenerateInput : public Error {
public:
    using Error::Error;
};

// --- perception ---

class EmptyCluster : public Error {
public:
    EmptyCluster() : Error("cluster has no member points") {}
};

class InvalidPose : public Error {
public:
    using Error::Error;
};

// --- reasoning ---

class MalformedResponse : public Error {
public:
    using Error::Error;
};

class SchemaViolation : public Error {
public:
    using Error::Error;
};

class BackendUnavailable : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

class ReplayMiss : public Error {
public:
    explicit ReplayMiss(const std::string& frame_id)
        : Error("no stored response for frame '" + frame_id + "'"), frame_id(frame_id) {}

    std::string frame_id;
};

// --- evaluation ---

class LengthMismatch : public Error {
public:
    LengthMismatch(std::size_t lhs, std::size_t rhs)
        : Error("length mismatch: " + std::to_string(lhs) + " vs " + std::to_string(rhs)) {}
};

class EmptyInput : public Error {
public:
    EmptyInput() : Error("input is empty") {}
};

class DegenerateGroundTruth : public Error {
public:
    DegenerateGroundTruth() : Error("ground truth has zero variance") {}
};

// --- scenario / files ---

class IoError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    SchemaError(const std::string& path, const std::string& field)
        : Error("schema error in " + path + ": field '" + field + "'"), path(path), field(field) {}

    std::string path;
    std::string field;
};

// --- cli ---

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace pla
