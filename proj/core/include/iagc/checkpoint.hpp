#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "iagc/errors.hpp"
#include "iagc/tensor.hpp"

namespace iagc {

// Checkpoint layout (little-endian): magic "IAGC", version u32, entry count
// u32, then per entry: name length u16, UTF-8 name, rank u8, dims u32 each,
// raw float32 data. Written atomically (temp file + rename).

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError("checkpoint truncated");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint8_t(buf[pos]) | (std::uint16_t(std::uint8_t(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return std::uint8_t(buf[pos++]);
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline void write_file_atomic(const std::string& path, const std::string& payload) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + tmp);
        f.write(payload.data(), std::streamsize(payload.size()));
        if (!f) throw IoError("short write: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return buf;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const ParamStore<T>& params, const std::string& path) {
    std::string out;
    out += "IAGC";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, std::uint32_t(params.size()));
    for (const auto& [name, p] : params) {
        if (name.size() > 0xffff) throw IoError("parameter name too long: " + name);
        detail::put_u16(out, std::uint16_t(name.size()));
        out += name;
        out.push_back(char(std::uint8_t(p.rank())));
        for (std::size_t d : p.shape()) detail::put_u32(out, std::uint32_t(d));
        for (T v : p.data()) detail::put_f32(out, float(v));
    }
    detail::write_file_atomic(path, out);
}

// Loads into an existing store; every entry must match a registered
// parameter's name and shape.
template <class T>
void load_checkpoint(ParamStore<T>& params, const std::string& path) {
    const std::string buf = detail::read_file(path);
    detail::Reader r{buf};
    if (r.bytes(4) != "IAGC") throw FormatError("bad checkpoint magic: " + path);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    std::size_t seen = 0;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.bytes(name_len);
        const std::uint8_t rank = r.u8();
        Shape shape(rank);
        for (std::uint8_t d = 0; d < rank; ++d) shape[d] = r.u32();
        if (!params.contains(name)) throw FormatError("checkpoint has unknown parameter: " + name);
        auto& p = params.get(name);
        if (p.shape() != shape)
            throw FormatError("checkpoint shape mismatch for " + name + ": file " +
                              shape_str(shape) + " vs model " + shape_str(p.shape()));
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = T(r.f32());
        ++seen;
    }
    if (seen != params.size())
        throw FormatError("checkpoint is missing " + std::to_string(params.size() - seen) +
                          " parameter(s)");
}

}  // namespace iagc
