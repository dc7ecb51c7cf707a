#pragma once

#include <stdexcept>
#include <string>

namespace fairpipe {

// Base for all library errors. Subclasses name the failure category so
// callers (and the CLI exit-code mapping) can distinguish bad inputs from
// internal failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values (weights not summing to 1, lr <= 0, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor shape mismatch in an engine primitive.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values or degenerate numeric input.
class NumericError : public Error {
public:
    using Error::Error;
};

// Empty or inconsistent datasets (missing gender, empty train set, ...).
class DataError : public Error {
public:
    using Error::Error;
};

// Operation called in the wrong order (backward without forward, ...).
class StateError : public Error {
public:
    using Error::Error;
};

// Bio renderer found no lexicon entry for a template slot.
class LexiconError : public Error {
public:
    using Error::Error;
};

// Key not found in a lookup table (precomputed embedding file, ...).
class LookupError : public Error {
public:
    using Error::Error;
};

// Stratified split cannot be satisfied.
class SplitError : public Error {
public:
    using Error::Error;
};

// Index outside its documented range.
class IndexError : public Error {
public:
    using Error::Error;
};

// File read/write failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace fairpipe
