#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ndo/errors.hpp"

namespace ndo {

// Little-endian binary reader/writer over whole files.  The on-disk formats
// in this project are defined little-endian; this code assumes an LE host.
class BinWriter {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void f32(float v) { raw(&v, 4); }
    void f32s(const float* p, size_t n) { raw(p, 4 * n); }
    void str(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void raw(const void* p, size_t n) {
        const char* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + path);
        f.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!f) throw IoError("write failed: " + path);
    }

    const std::vector<char>& bytes() const { return buf_; }

private:
    std::vector<char> buf_;
};

class BinReader {
public:
    explicit BinReader(std::vector<char> data, std::string name = "<buffer>")
        : buf_(std::move(data)), name_(std::move(name)) {}

    static BinReader from_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw IoError("cannot open: " + path);
        const auto size = f.tellg();
        f.seekg(0);
        std::vector<char> data(static_cast<size_t>(size));
        f.read(data.data(), size);
        if (!f) throw IoError("read failed: " + path);
        return BinReader(std::move(data), path);
    }

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint16_t u16() {
        uint16_t v;
        std::memcpy(&v, take(2), 2);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    float f32() {
        float v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    void f32s(float* p, size_t n) { std::memcpy(p, take(4 * n), 4 * n); }
    std::string str(size_t n) {
        const char* p = take(n);
        return std::string(p, n);
    }
    size_t remaining() const { return buf_.size() - pos_; }
    void expect_end() const {
        if (remaining()) throw FormatError(name_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }

private:
    const char* take(size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError(name_ + ": truncated (needed " + std::to_string(n) + " bytes)");
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::vector<char> buf_;
    std::string name_;
    size_t pos_ = 0;
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << content;
    if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

// Binary 8-bit PGM with linear min/max scaling; the applied range is written
// to a text sidecar so values can be read back quantitatively.
inline void write_pgm(const std::string& path, const float* data, int h, int w) {
    float lo = data[0], hi = data[0];
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
        lo = std::min(lo, data[i]);
        hi = std::max(hi, data[i]);
    }
    const float span = hi > lo ? hi - lo : 1.0f;
    std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    s.reserve(s.size() + static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
        const int v = static_cast<int>(255.0f * (data[i] - lo) / span + 0.5f);
        s.push_back(static_cast<char>(std::clamp(v, 0, 255)));
    }
    write_text_file(path, s);
    char side[128];
    std::snprintf(side, sizeof side, "min %.9g\nmax %.9g\n", static_cast<double>(lo), static_cast<double>(hi));
    write_text_file(path + ".range.txt", side);
}

// Fixed "%.9g" float formatting: round-trips float32 exactly and keeps CSV
// output byte-stable across runs.
inline std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace ndo
