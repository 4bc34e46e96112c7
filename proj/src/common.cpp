// SPDX-License-Identifier: Apache-2.0
#include "reora/common.hpp"

#include <cstring>

namespace reora {

long numel_of(const std::vector<long>& shape) {
    long n = 1;
    for (long e : shape) n *= e;
    return n;
}

std::string shape_str(const std::vector<long>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t hash_reals(const std::vector<real>& v) {
    return fnv1a64(v.data(), v.size() * sizeof(real));
}

std::string with_thousands(long long v) {
    const bool neg = v < 0;
    std::string digits = std::to_string(neg ? -v : v);
    std::string out;
    int count = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (count && count % 3 == 0) out += ',';
        out += *it;
        ++count;
    }
    if (neg) out += '-';
    return std::string(out.rbegin(), out.rend());
}

}  // namespace reora
