#pragma once

#include <stdexcept>
#include <string>

namespace sitsx {

// Base class for all sitsx failures. Subclasses map onto CLI exit codes:
// ConfigError -> 2, DataError -> 3, DivergedError -> 4, everything else -> 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss or activation.
class DivergedError : public Error {
public:
    using Error::Error;
};

// ---- objectives ----

class ZeroNormEmbedding : public Error {
public:
    explicit ZeroNormEmbedding(const std::string& msg = "embedding norm below epsilon")
        : Error(msg) {}
};

class SeriesTooShort : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class EmptyBatch : public Error {
public:
    explicit EmptyBatch(const std::string& msg = "empty batch") : Error(msg) {}
};

// ---- synthgen ----

class DegenerateMask : public DataError {
public:
    using DataError::DataError;
};

class CorpusTooSmall : public DataError {
public:
    using DataError::DataError;
};

// ---- ingest ----

class SceneTooSmall : public DataError {
public:
    using DataError::DataError;
};

class TooFewPatches : public DataError {
public:
    using DataError::DataError;
};

class EmptyClass : public DataError {
public:
    using DataError::DataError;
};

class UnreadableImage : public DataError {
public:
    using DataError::DataError;
};

// ---- baselines ----

class EmptyList : public Error {
public:
    explicit EmptyList(const std::string& msg = "empty list") : Error(msg) {}
};

// ---- detection ----

class DegenerateLabels : public Error {
public:
    using Error::Error;
};

// ---- model ----

class NonFiniteActivation : public DivergedError {
public:
    using DivergedError::DivergedError;
};

class NonFiniteLoss : public DivergedError {
public:
    using DivergedError::DivergedError;
};

class MissingPosterior : public Error {
public:
    explicit MissingPosterior(const std::string& msg = "VAE posterior stats missing")
        : Error(msg) {}
};

class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace sitsx
