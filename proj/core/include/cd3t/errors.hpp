#pragma once

#include <stdexcept>
#include <string>

namespace cd3t {

/// Invalid or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong lifecycle state (step after done, double freeze, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed operation input: wrong shapes, out-of-range ids, empty batches.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Checkpoint or export could not be read back.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cd3t
