#pragma once

#include <stdexcept>
#include <string>

namespace ssbt {

// Error taxonomy used across the toolkit. Everything derives from Error so
// callers can catch the whole family at the CLI boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-supplied parameters (class index out of range, invalid fraction, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Trigger geometry does not fit the image it is applied to.
struct GeometryError : Error {
    using Error::Error;
};

// A pipeline stage ran before the artifact it depends on exists.
struct DependencyError : Error {
    using Error::Error;
};

// Optimization produced non-finite losses.
struct TrainingError : Error {
    using Error::Error;
};

// A feature trigger whose mask support is empty cannot drive a mixer.
struct DegenerateTriggerError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace ssbt
