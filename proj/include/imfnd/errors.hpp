#pragma once

#include <stdexcept>
#include <string>

namespace imfnd {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class EmptyInput : public Error {
public:
    explicit EmptyInput(const std::string& what) : Error(what) {}
};

class ZeroVector : public Error {
public:
    explicit ZeroVector(const std::string& what) : Error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

class EmptyMatrix : public Error {
public:
    explicit EmptyMatrix(const std::string& what) : Error(what) {}
};

class DecodeError : public Error {
public:
    explicit DecodeError(const std::string& what) : Error(what) {}
};

class BackendFailure : public Error {
public:
    explicit BackendFailure(const std::string& what) : Error(what) {}
};

class DegenerateSupport : public Error {
public:
    explicit DegenerateSupport(const std::string& what) : Error(what) {}
};

class NonFiniteLoss : public Error {
public:
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

class MissingPrediction : public Error {
public:
    explicit MissingPrediction(const std::string& what) : Error(what) {}
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error(what) {}
};

class SchemaVersionMismatch : public Error {
public:
    explicit SchemaVersionMismatch(const std::string& what) : Error(what) {}
};

class MissingImage : public Error {
public:
    explicit MissingImage(const std::string& what) : Error(what) {}
};

class DegenerateDataset : public Error {
public:
    explicit DegenerateDataset(const std::string& what) : Error(what) {}
};

class InsufficientData : public Error {
public:
    explicit InsufficientData(const std::string& what) : Error(what) {}
};

class LengthMismatch : public Error {
public:
    explicit LengthMismatch(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// Transient backend fault; query() retries these.
class TransientBackendError : public Error {
public:
    explicit TransientBackendError(const std::string& what) : Error(what) {}
};

// Raised once the retry budget is exhausted.
class BackendUnavailable : public Error {
public:
    explicit BackendUnavailable(const std::string& what) : Error(what) {}
};

// Bad or missing credentials; never retried.
class AuthError : public Error {
public:
    explicit AuthError(const std::string& what) : Error(what) {}
};

}  // namespace imfnd
