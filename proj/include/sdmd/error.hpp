#pragma once

#include <stdexcept>
#include <string>

namespace sdmd {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
    config,     // malformed or inconsistent configuration / hierarchy
    data,       // input data violates an ingestion or shape contract
    numerical,  // a computation could not produce a meaningful result
    io,         // file could not be read or written
};

inline const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind)
    {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::config, msg}; }
inline Error data_error(const std::string& msg) { return {ErrorKind::data, msg}; }
inline Error numerical_error(const std::string& msg) { return {ErrorKind::numerical, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::io, msg}; }

} // namespace sdmd
