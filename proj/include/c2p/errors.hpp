#pragma once

#include <stdexcept>
#include <string>

namespace c2p {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An argument violated a documented precondition (bad shape, out-of-range value, ...).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// Inconsistent or unsupported configuration (channel mismatch, unknown extractor kind, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Transmission below the configured floor would make the physics inversion blow up.
class SingularityError : public Error {
public:
    using Error::Error;
};

// Contrastive denominator collapsed: every negative coincides with the anchor.
class DegenerateContrastError : public Error {
public:
    using Error::Error;
};

// Curriculum update invoked outside an epoch boundary.
class SequencingError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

// Training aborted (e.g. non-finite loss); message carries the offending batch ids.
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace c2p
