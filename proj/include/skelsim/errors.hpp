#pragma once

#include <stdexcept>
#include <string>

namespace skelsim {

/// Malformed input text (BVH, config, harmonization map). Carries a line
/// number when one is known; line 0 means "not line-addressable".
class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message
                                      : std::move(message)),
          line_(line) {}

    int line() const { return line_; }

private:
    int line_ = 0;
};

/// Geometric input on which a solver cannot run (collinear fiducials,
/// rank-deficient normal equations, parallel look-at axes).
class DegenerateGeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Covisibility graph does not connect every camera to the anchored
/// component; message lists the unreachable camera ids.
class DisconnectedGraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Teleoperation could not start: the tracked wrist was never acquired
/// inside the startup window (bad camera framing).
class FramingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File-system failure with path context.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace skelsim
