#pragma once

#include <stdexcept>
#include <string>

namespace tailorlab {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, unknown ids, malformed config. Maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset file does not conform to the expected columns. Maps to exit code 2.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A (rescue option, week) pair was requested that the outcome table does not hold.
class CoverageError : public Error {
public:
    using Error::Error;
};

/// Statistical failure at analysis time (non-identifiable regime, positivity
/// violation, non-randomized action). Maps to exit code 1.
class AnalysisError : public Error {
public:
    AnalysisError(std::string estimator, const std::string& what)
        : Error(estimator + ": " + what), estimator_(std::move(estimator)) {}

    const std::string& estimator() const noexcept { return estimator_; }

private:
    std::string estimator_;
};

}  // namespace tailorlab
