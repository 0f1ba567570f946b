// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace blsim {

// Bad layer geometry, mismatched dimensions, malformed network description.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Undecodable compressed weight stream. Carries the byte offset that was
// being read when the inconsistency was detected, when known.
class StreamError : public std::runtime_error {
public:
    explicit StreamError(const std::string& msg, int64_t byte_offset = -1)
        : std::runtime_error(byte_offset >= 0
                                 ? msg + " (at payload byte " + std::to_string(byte_offset) + ")"
                                 : msg),
          byte_offset_(byte_offset) {}
    int64_t byte_offset() const { return byte_offset_; }

private:
    int64_t byte_offset_;
};

// Slice-buffer protocol misuse (push into an occupied staging slot etc).
class ProtocolError : public std::logic_error {
public:
    explicit ProtocolError(const std::string& msg) : std::logic_error(msg) {}
};

// Raised in exact-check mode when a result does not fit the configured
// accumulator width. Carries the first offending output coordinate.
class AccumulatorOverflow : public std::runtime_error {
public:
    AccumulatorOverflow(const std::string& msg, int x, int y, int o)
        : std::runtime_error(msg + " at (x=" + std::to_string(x) + ", y=" + std::to_string(y) +
                             ", o=" + std::to_string(o) + ")"),
          x_(x), y_(y), o_(o) {}
    int x() const { return x_; }
    int y() const { return y_; }
    int o() const { return o_; }

private:
    int x_, y_, o_;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace blsim
