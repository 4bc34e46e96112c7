// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reora {

using real = double;

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers can catch broadly; the CLI maps them to exit codes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

long numel_of(const std::vector<long>& shape);
std::string shape_str(const std::vector<long>& shape);

// FNV-1a 64-bit, used for checksums and seed derivation.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t hash_reals(const std::vector<real>& v);

// 28311552 -> "28,311,552"
std::string with_thousands(long long v);

}  // namespace reora
