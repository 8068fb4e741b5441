#include "common.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace gradfix {

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    // shortest form that parses back to the same bits
    char buf[40];
    for (int prec = 1; prec <= 17; prec++) {
        snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        sscanf(buf, "%lf", &back);
        if (back == v) {
            break;
        }
    }
    return std::string(buf);
}

uint64_t fnv1a64(const void * data, size_t len) {
    const uint8_t * p = static_cast<const uint8_t *>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < len; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64(const std::string & s) {
    return fnv1a64(s.data(), s.size());
}

namespace {

std::array<uint32_t, 256> make_crc_table() {
    std::array<uint32_t, 256> table{};
    for (uint32_t n = 0; n < 256; n++) {
        uint32_t c = n;
        for (int k = 0; k < 8; k++) {
            c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        }
        table[n] = c;
    }
    return table;
}

} // namespace

uint32_t crc32(const void * data, size_t len, uint32_t seed) {
    static const std::array<uint32_t, 256> table = make_crc_table();
    const uint8_t * p = static_cast<const uint8_t *>(data);
    uint32_t c = seed ^ 0xffffffffu;
    for (size_t i = 0; i < len; i++) {
        c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
    }
    return c ^ 0xffffffffu;
}

} // namespace gradfix
