#pragma once

#include <stdexcept>
#include <string>

namespace signet {

// Error taxonomy used across the library. Each condition gets its own type so
// callers (and tests) can catch exactly what they expect.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct InvalidDimensions : std::runtime_error {
    explicit InvalidDimensions(const std::string& msg)
        : std::runtime_error("invalid dimensions: " + msg) {}
};

// Histogram has a single populated bin; no threshold separates two classes.
struct DegenerateHistogram : std::runtime_error {
    explicit DegenerateHistogram(const std::string& msg)
        : std::runtime_error("degenerate histogram: " + msg) {}
};

struct DoesNotFit : std::runtime_error {
    explicit DoesNotFit(const std::string& msg) : std::runtime_error("does not fit: " + msg) {}
};

struct InsufficientBatch : std::runtime_error {
    explicit InsufficientBatch(const std::string& msg)
        : std::runtime_error("insufficient batch: " + msg) {}
};

struct NonFiniteGradient : std::runtime_error {
    explicit NonFiniteGradient(const std::string& msg)
        : std::runtime_error("non-finite gradient: " + msg) {}
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& msg, double residual)
        : std::runtime_error("convergence error: " + msg), kkt_residual(residual) {}
    double kkt_residual;
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error("index error: " + msg) {}
};

struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error("protocol error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace signet
