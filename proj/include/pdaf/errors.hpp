// Copyright (c) 2026 the pdaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pdaf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up (bad conv geometry, mismatched operands, ...).
struct ShapeError : Error {
    using Error::Error;
};

/// An API precondition was violated (non-scalar loss, reused graph, ...).
struct ContractError : Error {
    using Error::Error;
};

/// Invalid configuration value or combination.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed on-disk input; carries the byte offset where parsing failed.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

struct IoError : Error {
    using Error::Error;
};

/// Raised when training encounters a non-finite loss.
struct TrainingAbort : Error {
    using Error::Error;
};

}  // namespace pdaf
