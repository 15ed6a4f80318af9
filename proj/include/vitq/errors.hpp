#pragma once

#include <stdexcept>
#include <string>

namespace vitq {

// Shape/dimension mismatch in a tensor operation.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid argument value (non-positive delta, bits out of range, ...).
class ValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Anything wrong with a .vitm/.vitt container file.
class ContainerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Blob shorter/longer than the manifest directory promises.
class BlobLengthError : public ContainerError {
public:
    using ContainerError::ContainerError;
};

// Manifest shape inconsistent with offsets or with the model config.
class ManifestShapeError : public ContainerError {
public:
    using ContainerError::ContainerError;
};

// NaN/Inf found in a loaded tensor.
class NonFiniteError : public ContainerError {
public:
    using ContainerError::ContainerError;
};

// Bad run configuration (missing fields, invalid combinations).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem failure (missing path, unwritable output).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bit allocation cannot meet the size budget even at minimum bits.
class InfeasibleBudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite value produced where the pipeline requires finite math.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Forward pass was handed hooks that lack a site it needs.
class MissingSiteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace vitq
