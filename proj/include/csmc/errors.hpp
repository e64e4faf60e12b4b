#pragma once

#include <stdexcept>

namespace csmc {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model construction and validation.
struct ModelError : Error { using Error::Error; };
struct NonStochasticError : ModelError { using ModelError::ModelError; };
struct NegativePotentialError : ModelError { using ModelError::ModelError; };
struct DegeneratePotentialError : ModelError { using ModelError::ModelError; };
struct DimensionMismatchError : ModelError { using ModelError::ModelError; };

// Exact-inference oracle.
struct TooLargeError : Error { using Error::Error; };
struct ZeroNormalizerError : Error { using Error::Error; };

// Particle systems.
struct ZeroWeightVectorError : Error { using Error::Error; };
struct IndexOutOfRangeError : Error { using Error::Error; };

// Diagnostics.
struct OracleRequiredError : Error { using Error::Error; };

// Experiment configuration.
struct ConfigError : Error { using Error::Error; };

}  // namespace csmc
