// Copyright (c) 2026 the pdaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace pdaf {

/// Counter-based deterministic random stream. The value produced for a given
/// (seed, counter) pair never depends on anything else, so streams can be
/// forked, replayed and compared across runs.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    RngStream() = default;
    explicit RngStream(std::uint64_t s) : seed(s) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi);

    /// Standard normal via Box-Muller; consumes two counter steps.
    double gaussian();

    /// Independent child stream; does not advance this stream.
    RngStream derive(std::uint64_t stream_id) const;
};

/// FNV-1a 64-bit hash, used for digests and checkpoint checksums.
std::uint64_t fnv1a(const void* ptr, std::size_t len,
                    std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a_str(const std::string& s);

std::string hex_u64(std::uint64_t v);

}  // namespace pdaf
