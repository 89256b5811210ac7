#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sdd/audio.hpp"
#include "sdd/error.hpp"

namespace sdd {

namespace {

struct FmtChunk {
    std::uint16_t format = 0;  // 1 = PCM, 3 = IEEE float
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

std::uint32_t rd_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void parse_riff(const std::string& path, std::vector<unsigned char>& bytes, FmtChunk& fmt,
                std::size_t& data_off, std::size_t& data_len) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot read wav file " + path);
    }
    bytes.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw schema_error(path + ": not a RIFF/WAVE file");
    }
    std::size_t pos = 12;
    bool have_fmt = false;
    data_off = 0;
    data_len = 0;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
        const unsigned char* body = bytes.data() + pos + 8;
        if (pos + 8 + len > bytes.size()) {
            throw schema_error(path + ": truncated chunk");
        }
        if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
            if (len < 16) {
                throw schema_error(path + ": short fmt chunk");
            }
            fmt.format = rd_u16(body);
            fmt.channels = rd_u16(body + 2);
            fmt.sample_rate = rd_u32(body + 4);
            fmt.bits = rd_u16(body + 14);
            have_fmt = true;
        } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = len;
        }
        pos += 8 + len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data_off == 0) {
        throw schema_error(path + ": missing fmt or data chunk");
    }
    if (fmt.channels == 0 || fmt.sample_rate == 0) {
        throw schema_error(path + ": bad fmt chunk");
    }
    if (!((fmt.format == 1 && fmt.bits == 16) || (fmt.format == 3 && fmt.bits == 32))) {
        throw schema_error(path + ": unsupported wav encoding (need PCM16 or float32)");
    }
}

}  // namespace

WavInfo wav_info(const std::string& path) {
    std::vector<unsigned char> bytes;
    FmtChunk fmt;
    std::size_t data_off = 0;
    std::size_t data_len = 0;
    parse_riff(path, bytes, fmt, data_off, data_len);
    const std::size_t bytes_per = fmt.bits / 8u;
    WavInfo info;
    info.sample_rate = static_cast<int>(fmt.sample_rate);
    info.channels = fmt.channels;
    info.n_samples = static_cast<i64>(data_len / (bytes_per * fmt.channels));
    return info;
}

Waveform read_wav(const std::string& path, int target_rate) {
    std::vector<unsigned char> bytes;
    FmtChunk fmt;
    std::size_t data_off = 0;
    std::size_t data_len = 0;
    parse_riff(path, bytes, fmt, data_off, data_len);

    const std::size_t bytes_per = fmt.bits / 8u;
    const std::size_t frame_bytes = bytes_per * fmt.channels;
    const i64 n = static_cast<i64>(data_len / frame_bytes);

    Waveform w;
    w.sample_rate = static_cast<int>(fmt.sample_rate);
    w.samples.resize(static_cast<std::size_t>(n));
    const unsigned char* d = bytes.data() + data_off;
    for (i64 i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int ch = 0; ch < fmt.channels; ++ch) {
            const unsigned char* s = d + static_cast<std::size_t>(i) * frame_bytes +
                                     static_cast<std::size_t>(ch) * bytes_per;
            if (fmt.format == 1) {
                const std::int16_t v = static_cast<std::int16_t>(s[0] | (s[1] << 8));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                const std::uint32_t bits = rd_u32(s);
                float fv;
                std::memcpy(&fv, &bits, 4);
                acc += static_cast<double>(fv);
            }
        }
        w.samples[static_cast<std::size_t>(i)] = acc / fmt.channels;
    }

    if (w.sample_rate != target_rate && !w.samples.empty()) {
        const double ratio = static_cast<double>(w.sample_rate) / target_rate;
        const i64 out_n = static_cast<i64>(std::floor(static_cast<double>(n - 1) / ratio)) + 1;
        std::vector<double> out(static_cast<std::size_t>(out_n));
        for (i64 i = 0; i < out_n; ++i) {
            const double pos = static_cast<double>(i) * ratio;
            const i64 i0 = static_cast<i64>(pos);
            const i64 i1 = std::min<i64>(i0 + 1, n - 1);
            const double frac = pos - static_cast<double>(i0);
            out[static_cast<std::size_t>(i)] =
                (1.0 - frac) * w.samples[static_cast<std::size_t>(i0)] +
                frac * w.samples[static_cast<std::size_t>(i1)];
        }
        w.samples = std::move(out);
        w.sample_rate = target_rate;
    }
    return w;
}

void write_wav16(const std::string& path, const Waveform& w) {
    const i64 n = static_cast<i64>(w.samples.size());
    const std::uint32_t data_len = static_cast<std::uint32_t>(n * 2);
    std::vector<unsigned char> out;
    out.reserve(44 + data_len);
    auto put_u32 = [&out](std::uint32_t v) {
        out.push_back(static_cast<unsigned char>(v & 0xff));
        out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
        out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
    };
    auto put_u16 = [&out](std::uint16_t v) {
        out.push_back(static_cast<unsigned char>(v & 0xff));
        out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    };
    auto put_tag = [&out](const char* t) { out.insert(out.end(), t, t + 4); };

    put_tag("RIFF");
    put_u32(36 + data_len);
    put_tag("WAVE");
    put_tag("fmt ");
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<std::uint32_t>(w.sample_rate));
    put_u32(static_cast<std::uint32_t>(w.sample_rate * 2));
    put_u16(2);
    put_u16(16);
    put_tag("data");
    put_u32(data_len);
    for (i64 i = 0; i < n; ++i) {
        const double clamped = std::clamp(w.samples[static_cast<std::size_t>(i)], -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        put_u16(static_cast<std::uint16_t>(v));
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot write wav file " + path);
    }
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw io_error("short write to " + path);
    }
}

}  // namespace sdd
