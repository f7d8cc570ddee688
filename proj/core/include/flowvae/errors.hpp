#pragma once

#include <stdexcept>
#include <string>

namespace flowvae {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor / layer shape mismatches.
struct DimensionError : Error {
    using Error::Error;
};

// Bad call arguments that are not shape-related.
struct ArgumentError : Error {
    using Error::Error;
};

// Operation called in the wrong order (e.g. backward without forward).
struct StateError : Error {
    using Error::Error;
};

// Missing or inconsistent optimizer bookkeeping.
struct ConsistencyError : Error {
    using Error::Error;
};

// Batch statistics cannot be computed (batch of one in train mode).
struct DegenerateBatchError : Error {
    using Error::Error;
};

// Dataset-level problems: empty data, bad rows, impossible balancing.
struct DataError : Error {
    using Error::Error;
};

// Column/feature-name problems against a schema.
struct SchemaError : Error {
    using Error::Error;
};

// Bad run configuration (unknown preset, conflicting sources, no seed).
struct ConfigError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; message names the step.
struct DivergedError : Error {
    using Error::Error;
};

// Benign-only training set contained malicious rows.
struct ContaminationError : Error {
    using Error::Error;
};

// Frozen model weights changed while they were required to stay fixed.
struct IsolationError : Error {
    using Error::Error;
};

}  // namespace flowvae
