// Copyright (c) 2026 the pdaf authors
// SPDX-License-Identifier: Apache-2.0

#include "pdaf/rng.hpp"

#include <cmath>
#include <cstdio>

namespace pdaf {

namespace {

inline std::uint64_t splitmix_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

}  // namespace

std::uint64_t RngStream::next_u64() {
    const std::uint64_t z = seed + (++counter) * kGolden;
    return splitmix_finalize(z);
}

double RngStream::uniform() {
    // 53 mantissa bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + uniform() * (hi - lo);
}

int RngStream::uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

double RngStream::gaussian() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

RngStream RngStream::derive(std::uint64_t stream_id) const {
    return RngStream(splitmix_finalize(seed ^ (stream_id * kGolden + 0x632BE59BD9B4E019ull)));
}

std::uint64_t fnv1a(const void* ptr, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a_str(const std::string& s) {
    return fnv1a(s.data(), s.size());
}

std::string hex_u64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace pdaf
