#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "signet/errors.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Little-endian binary primitives shared by the checkpoint, feature, model
// and tensor file formats. Byte order is written explicitly so the files are
// portable across hosts.

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out_.write(b, 4);
    }

    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v & 0xffffffffull));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void f32(float v) {
        std::uint32_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void magic(const char m[4]) { out_.write(m, 4); }

    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void f32_array(const float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }

    // (rank, dims..., float32 payload)
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) u32(static_cast<std::uint32_t>(d));
        f32_array(t.ptr(), t.size());
    }

    void close() {
        out_.close();
        if (!out_.good()) throw IoError("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path);
        path_ = path;
    }

    std::uint8_t u8() {
        int c = in_.get();
        if (c == EOF) fail("unexpected end of file");
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        in_.read(reinterpret_cast<char*>(b), 4);
        if (!in_) fail("unexpected end of file");
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t u64() {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_magic(const char m[4], const std::string& what) {
        char b[4];
        in_.read(b, 4);
        if (!in_ || std::memcmp(b, m, 4) != 0) fail("bad magic, not a " + what + " file");
    }

    std::string str() {
        std::uint64_t n = u64();
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) fail("unexpected end of file");
        return s;
    }

    void f32_array(float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f32();
    }

    Tensor tensor() {
        std::uint32_t rank = u32();
        if (rank > 8) fail("implausible tensor rank");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = u32();
        Tensor t(shape);
        f32_array(t.ptr(), t.size());
        return t;
    }

    [[noreturn]] void fail(const std::string& msg) { throw IoError(msg + " in " + path_); }

private:
    std::ifstream in_;
    std::string path_;
};

// Standalone tensor file (`.sgt`): magic SGTS, version, then the tensor.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace signet
