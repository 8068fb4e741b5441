#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gradfix {

// Error categories. Numeric values double as CLI exit codes.
enum class errc : int {
    config  = 2,   // bad config, bad arguments, precondition or congruence failure
    numeric = 3,   // divergence, non-finite values
    io      = 4,   // filesystem, format, checksum
};

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string & what) : std::runtime_error(what), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void throw_config(const std::string & msg)  { throw Error(errc::config,  msg); }
[[noreturn]] inline void throw_numeric(const std::string & msg) { throw Error(errc::numeric, msg); }
[[noreturn]] inline void throw_io(const std::string & msg)      { throw Error(errc::io,      msg); }

// Shortest round-trippable decimal representation, used by every CSV/JSON
// emitter so that identical runs produce identical bytes.
std::string format_double(double v);

// FNV-1a, used for config hashing and seed derivation tags.
uint64_t fnv1a64(const void * data, size_t len);
uint64_t fnv1a64(const std::string & s);

uint32_t crc32(const void * data, size_t len, uint32_t seed = 0);

} // namespace gradfix
