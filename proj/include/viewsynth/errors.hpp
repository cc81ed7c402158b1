#pragma once

#include <stdexcept>
#include <string>

namespace viewsynth {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: configuration, angles, paths, dataset layout.
/// The CLI maps this family to exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

class InvalidField : public ValidationError {
public:
    InvalidField(std::string field, const std::string& constraint)
        : ValidationError("invalid field '" + field + "': " + constraint), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class UnsupportedView : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class EmptyCaption : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class CaptionerUnavailable : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MissingImage : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DuplicateId : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class EmptyManifest : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnpairedScenes : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class BackendFailure : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

class FrozenWeightViolation : public Error {
public:
    using Error::Error;
};

class AllScenesFailed : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace viewsynth
