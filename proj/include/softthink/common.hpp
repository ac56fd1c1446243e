#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace softthink {

using TokenId = std::int32_t;

inline constexpr int kSchemaVersion = 1;

/// Malformed or incompatible data: bad files, mismatched model cards,
/// out-of-range token ids, non-finite inputs.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model math produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sequence length would exceed the model's context window.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace softthink
