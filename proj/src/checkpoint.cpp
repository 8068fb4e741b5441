#include "checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <vector>

namespace gradfix {

namespace {

constexpr uint32_t kFormatVersion = 1;

void put_u32(std::vector<uint8_t> & buf, uint32_t v) {
    for (int i = 0; i < 4; i++) {
        buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
}

void put_u64(std::vector<uint8_t> & buf, uint64_t v) {
    for (int i = 0; i < 8; i++) {
        buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
}

void put_f64(std::vector<uint8_t> & buf, double v) {
    uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(buf, bits);
}

class Reader {
public:
    Reader(const uint8_t * data, size_t size, std::string path)
        : data_(data), size_(size), path_(std::move(path)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) {
            v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; i++) {
            v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64() {
        const uint64_t bits = u64();
        double v = 0.0;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    int8_t i8() {
        need(1);
        return static_cast<int8_t>(data_[pos_++]);
    }

    std::string str(size_t len) {
        need(len);
        std::string s(reinterpret_cast<const char *>(data_ + pos_), len);
        pos_ += len;
        return s;
    }

    size_t pos() const { return pos_; }

    void need(size_t n) const {
        if (pos_ + n > size_) {
            throw_io("truncated file: " + path_);
        }
    }

private:
    const uint8_t * data_;
    size_t size_;
    size_t pos_ = 0;
    std::string path_;
};

void write_atomic(const std::string & path, const std::vector<uint8_t> & payload) {
    std::vector<uint8_t> buf = payload;
    const uint32_t checksum = crc32(buf.data(), buf.size());
    put_u32(buf, checksum);

    const std::string tmp = path + ".tmp";
    FILE * f = fopen(tmp.c_str(), "wb");
    if (!f) {
        throw_io("cannot open for writing: " + tmp);
    }
    const size_t written = fwrite(buf.data(), 1, buf.size(), f);
    const bool flush_ok = fflush(f) == 0;
    fclose(f);
    if (written != buf.size() || !flush_ok) {
        remove(tmp.c_str());
        throw_io("short write: " + tmp);
    }
    if (rename(tmp.c_str(), path.c_str()) != 0) {
        remove(tmp.c_str());
        throw_io("cannot rename " + tmp + " to " + path);
    }
}

std::vector<uint8_t> read_all(const std::string & path) {
    FILE * f = fopen(path.c_str(), "rb");
    if (!f) {
        throw_io("cannot open: " + path);
    }
    fseek(f, 0, SEEK_END);
    const long size = ftell(f);
    fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> buf(size > 0 ? static_cast<size_t>(size) : 0);
    const size_t got = buf.empty() ? 0 : fread(buf.data(), 1, buf.size(), f);
    fclose(f);
    if (got != buf.size()) {
        throw_io("short read: " + path);
    }
    return buf;
}

// Strips and verifies the trailing CRC, checks the magic, returns a reader
// positioned after the header.
Reader open_container(const std::vector<uint8_t> & buf, const char * magic, const std::string & path) {
    if (buf.size() < 4 + 4 + 4 + 4) {
        throw_io("truncated file: " + path);
    }
    if (std::memcmp(buf.data(), magic, 4) != 0) {
        throw_io("bad magic in " + path + ": expected '" + std::string(magic) + "', found '" +
                 std::string(reinterpret_cast<const char *>(buf.data()), 4) + "'");
    }
    const size_t body = buf.size() - 4;
    uint32_t stored = 0;
    for (int i = 0; i < 4; i++) {
        stored |= static_cast<uint32_t>(buf[body + i]) << (8 * i);
    }
    if (crc32(buf.data(), body) != stored) {
        throw_io("checksum mismatch: " + path);
    }
    Reader r(buf.data(), body, path);
    r.str(4);  // past the magic
    const uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw_io("unsupported format version " + std::to_string(version) + " in " + path);
    }
    return r;
}

template <typename Seg>
void put_segment_header(std::vector<uint8_t> & buf, const Seg & seg) {
    put_u32(buf, static_cast<uint32_t>(seg.name.size()));
    for (char c : seg.name) {
        buf.push_back(static_cast<uint8_t>(c));
    }
    put_u32(buf, static_cast<uint32_t>(seg.shape.size()));
    for (int64_t d : seg.shape) {
        put_u64(buf, static_cast<uint64_t>(d));
    }
}

struct SegmentHeader {
    std::string name;
    std::vector<int64_t> shape;
    int64_t numel;
};

SegmentHeader read_segment_header(Reader & r, const std::string & path) {
    SegmentHeader h;
    const uint32_t name_len = r.u32();
    h.name = r.str(name_len);
    const uint32_t ndim = r.u32();
    h.numel = 1;
    for (uint32_t d = 0; d < ndim; d++) {
        const uint64_t dim = r.u64();
        if (dim == 0 || dim > (1ull << 40)) {
            throw_io("bad dimension in " + path + " segment '" + h.name + "'");
        }
        h.shape.push_back(static_cast<int64_t>(dim));
        h.numel *= static_cast<int64_t>(dim);
    }
    return h;
}

std::vector<uint8_t> encode_params(const ParamVector & v, const char * magic) {
    std::vector<uint8_t> buf;
    for (int i = 0; i < 4; i++) {
        buf.push_back(static_cast<uint8_t>(magic[i]));
    }
    put_u32(buf, kFormatVersion);
    put_u32(buf, static_cast<uint32_t>(v.segments.size()));
    for (const auto & seg : v.segments) {
        put_segment_header(buf, seg);
        for (double x : seg.values) {
            put_f64(buf, x);
        }
    }
    return buf;
}

ParamVector decode_params(const std::vector<uint8_t> & buf, const char * magic, const std::string & path) {
    Reader r = open_container(buf, magic, path);
    ParamVector v;
    const uint32_t n_segments = r.u32();
    v.segments.reserve(n_segments);
    for (uint32_t s = 0; s < n_segments; s++) {
        SegmentHeader h = read_segment_header(r, path);
        Segment seg;
        seg.name = std::move(h.name);
        seg.shape = std::move(h.shape);
        seg.values.resize(static_cast<size_t>(h.numel));
        for (auto & x : seg.values) {
            x = r.f64();
        }
        v.segments.push_back(std::move(seg));
    }
    return v;
}

std::vector<uint8_t> encode_signs(const std::vector<SignSegment> & segments, const char * magic) {
    std::vector<uint8_t> buf;
    for (int i = 0; i < 4; i++) {
        buf.push_back(static_cast<uint8_t>(magic[i]));
    }
    put_u32(buf, kFormatVersion);
    put_u32(buf, static_cast<uint32_t>(segments.size()));
    for (const auto & seg : segments) {
        put_segment_header(buf, seg);
        for (int8_t x : seg.values) {
            buf.push_back(static_cast<uint8_t>(x));
        }
    }
    return buf;
}

std::vector<SignSegment> decode_signs(const std::vector<uint8_t> & buf, const char * magic,
                                      const std::string & path, int8_t lo, int8_t hi) {
    Reader r = open_container(buf, magic, path);
    std::vector<SignSegment> segments;
    const uint32_t n_segments = r.u32();
    segments.reserve(n_segments);
    for (uint32_t s = 0; s < n_segments; s++) {
        SegmentHeader h = read_segment_header(r, path);
        SignSegment seg;
        seg.name = std::move(h.name);
        seg.shape = std::move(h.shape);
        seg.values.resize(static_cast<size_t>(h.numel));
        for (auto & x : seg.values) {
            x = r.i8();
            if (x < lo || x > hi) {
                throw_io("out-of-range value in " + path + " segment '" + seg.name + "'");
            }
        }
        segments.push_back(std::move(seg));
    }
    return segments;
}

} // namespace

void save_checkpoint(const ParamVector & v, const std::string & path) {
    write_atomic(path, encode_params(v, "GFX1"));
}

ParamVector load_checkpoint(const std::string & path) {
    return decode_params(read_all(path), "GFX1", path);
}

void save_signs(const SignVector & v, const std::string & path) {
    write_atomic(path, encode_signs(v.segments, "GFXS"));
}

SignVector load_signs(const std::string & path) {
    SignVector v;
    v.segments = decode_signs(read_all(path), "GFXS", path, -1, 1);
    return v;
}

void save_mask(const MaskVector & m, const std::string & path) {
    write_atomic(path, encode_signs(m.segments, m.kind == MaskKind::Binary ? "GFXM" : "GFXF"));
}

MaskVector load_mask(const std::string & path) {
    const std::vector<uint8_t> buf = read_all(path);
    MaskVector m;
    if (buf.size() >= 4 && std::memcmp(buf.data(), "GFXM", 4) == 0) {
        m.kind = MaskKind::Binary;
        m.segments = decode_signs(buf, "GFXM", path, 0, 1);
    } else {
        m.kind = MaskKind::Signed;
        m.segments = decode_signs(buf, "GFXF", path, -1, 1);
    }
    return m;
}

void save_feature_container(const ParamVector & v, const std::string & path) {
    write_atomic(path, encode_params(v, "GFXE"));
}

ParamVector load_feature_container(const std::string & path) {
    return decode_params(read_all(path), "GFXE", path);
}

} // namespace gradfix
