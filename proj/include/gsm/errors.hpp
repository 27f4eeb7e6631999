#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsm {

/// Malformed or truncated on-disk data. Carries the offset at which parsing
/// failed: a byte offset for binary formats, a line number for text ones.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Raised by the scale estimator when the correspondence set cannot support
/// a least-squares fit (empty, zero denominator, or below the minimum count).
class DegenerateCorrespondences : public std::runtime_error {
public:
    explicit DegenerateCorrespondences(const std::string& what)
        : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gsm
