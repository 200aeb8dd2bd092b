#pragma once

#include <stdexcept>
#include <string>

namespace patchkit {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Malformed or unreadable input file (dataset, patch sidecar, image).
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace patchkit
