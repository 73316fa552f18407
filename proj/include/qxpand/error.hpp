#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qx {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// conformability violations; message names both shapes
struct shape_error : error {
    using error::error;
};

// malformed input file; carries the 1-based offending line
struct parse_error : error {
    parse_error(const std::string& what, std::size_t line_no)
        : error(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

struct io_error : error {
    using error::error;
};

// semantically invalid data (duplicate ids, empty input, degenerate batches, ...)
struct data_error : error {
    using error::error;
};

// NaN/Inf where the contract demands finite values
struct numeric_error : error {
    using error::error;
};

struct checkpoint_version_error : error {
    using error::error;
};

struct checkpoint_truncated_error : error {
    using error::error;
};

// manifest disagrees with payload: shape, size or content hash
struct checkpoint_manifest_error : error {
    using error::error;
};

}  // namespace qx
