#pragma once

#include <stdexcept>
#include <string>

namespace carenet {

// Failure categories surfaced by the library. Every throw site tags one so
// callers (and tests) can match on the class of failure instead of parsing
// message text.
enum class ErrorKind {
    Io,
    Format,
    Validation,
    Range,
    Input,
    Config,
    Model,
    Correction,
    Normalization,
    Schema,
    Decode,
    Graph,
    Loss,
    Split,
    Segmentation,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) raise(kind, message);
}

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "io error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::Range: return "range error";
        case ErrorKind::Input: return "input error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Model: return "model error";
        case ErrorKind::Correction: return "correction error";
        case ErrorKind::Normalization: return "normalization error";
        case ErrorKind::Schema: return "schema error";
        case ErrorKind::Decode: return "decode error";
        case ErrorKind::Graph: return "graph error";
        case ErrorKind::Loss: return "loss error";
        case ErrorKind::Split: return "split error";
        case ErrorKind::Segmentation: return "segmentation error";
    }
    return "error";
}

}  // namespace carenet
