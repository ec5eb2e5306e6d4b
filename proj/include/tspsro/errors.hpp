#pragma once

#include <stdexcept>
#include <string>

namespace tspsro {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidScale : Error { using Error::Error; };
struct InvalidParameter : Error { using Error::Error; };
struct DegenerateInstance : Error { using Error::Error; };
struct SizeMismatch : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };
struct MalformedFile : Error { using Error::Error; };
struct TooLarge : Error { using Error::Error; };
struct InvalidOracleValue : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct StateExhausted : Error { using Error::Error; };
struct InvalidCandidate : Error { using Error::Error; };
struct EmptyPopulation : Error { using Error::Error; };
struct InvalidWeights : Error { using Error::Error; };
struct InvalidExpansion : Error { using Error::Error; };
struct SolveError : Error { using Error::Error; };
struct IncompleteCheckpoint : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace tspsro
