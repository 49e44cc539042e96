#include "arn/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "arn/error.hpp"

namespace arn {

namespace {

void put_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav(const std::string& path, const std::vector<double>& samples, double fs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("wav", "cannot write '" + path + "'");
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
    os.write("RIFF", 4);
    put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 3);  // IEEE float
    put_u16(os, 1);
    put_u32(os, static_cast<std::uint32_t>(fs));
    put_u32(os, static_cast<std::uint32_t>(fs) * 4);
    put_u16(os, 4);
    put_u16(os, 32);
    os.write("data", 4);
    put_u32(os, data_bytes);
    for (double v : samples) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(os, bits);
    }
    if (!os) throw Error("wav", "write failed for '" + path + "'");
}

WavData read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("wav", "cannot open '" + path + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw Error("wav", "'" + path + "' is not a RIFF/WAVE file");
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        std::uint32_t len = get_u32(&buf[pos + 4]);
        const unsigned char* body = &buf[pos + 8];
        std::size_t avail = std::min<std::size_t>(len, buf.size() - pos - 8);
        if (std::memcmp(&buf[pos], "fmt ", 4) == 0 && avail >= 16) {
            format = get_u16(body);
            channels = get_u16(body + 2);
            rate = get_u32(body + 4);
            bits = get_u16(body + 14);
            if (format == 0xFFFE && avail >= 26) format = get_u16(body + 24);
        } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
            data = body;
            data_len = avail;
        }
        pos += 8 + len + (len & 1);
    }
    if (!data || channels == 0 || rate == 0) throw Error("wav", "'" + path + "' lacks fmt or data chunk");
    const std::size_t width = bits / 8;
    if (!((format == 3 && bits == 32) || (format == 1 && (bits == 16 || bits == 24 || bits == 32))))
        throw Error("wav", "'" + path + "' has unsupported sample format");
    WavData w;
    w.fs = rate;
    const std::size_t frame = width * channels;
    const std::size_t frames = data_len / frame;
    w.samples.resize(frames);
    for (std::size_t k = 0; k < frames; ++k) {
        const unsigned char* p = data + k * frame;
        double v = 0.0;
        if (format == 3) {
            std::uint32_t u = get_u32(p);
            float f;
            std::memcpy(&f, &u, 4);
            v = f;
        } else if (bits == 16) {
            v = static_cast<std::int16_t>(get_u16(p)) / 32768.0;
        } else if (bits == 24) {
            std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
            if (s & 0x800000) s -= 1 << 24;
            v = s / 8388608.0;
        } else {
            v = static_cast<std::int32_t>(get_u32(p)) / 2147483648.0;
        }
        w.samples[k] = v;
    }
    return w;
}

}  // namespace arn
