#pragma once

#include <stdexcept>
#include <string>

namespace fineprune {

enum class ErrorCode {
    dimension,          // shape mismatch between operands or against a layer
    invalid_argument,   // value outside its documented domain
    empty_input,        // empty dataset, grid, or ledger
    structure_mismatch, // ledger/mask/network topologies disagree
    version_mismatch,   // model file format version not supported
    truncated_blob,     // model file blob shorter or longer than declared
    offset_overlap,     // manifest tensor offsets overlap or leave gaps
    bad_magic,          // IDX magic number mismatch
    count_mismatch,     // IDX image/label counts disagree
    unsupported_format, // WAV not PCM-16 or otherwise unreadable
    parse,              // malformed text input (CSV, JSON manifest)
    io,                 // filesystem failure
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // True for errors caused by the filesystem rather than by content.
    bool is_io() const noexcept { return code_ == ErrorCode::io; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(to_string(code)) + ": " + what);
}

} // namespace fineprune
