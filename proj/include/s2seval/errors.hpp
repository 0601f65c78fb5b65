#pragma once

#include <stdexcept>
#include <string>

namespace s2seval {

// Bad input: malformed files, violated preconditions, out-of-range values.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation failed on otherwise valid input (unreadable audio, a failing
// subprocess). The CLI maps these to exit code 2.
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace s2seval
