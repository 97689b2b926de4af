#pragma once

#include <stdexcept>
#include <string>

namespace mvhan {

// One exception type per contract failure mode, so callers and tests can
// distinguish a shape mismatch from, say, a malformed input file.

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A forward operation produced NaN/Inf from finite inputs.
struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateVectorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Embedding id outside its field's vocabulary, or unknown entity id.
struct LookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: backward on a non-scalar, eps <= 0, and similar.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mvhan
