#include "temposteer/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace temposteer {
namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}
std::uint16_t rd_u16(const unsigned char* p) {
    return std::uint16_t(p[0] | p[1] << 8);
}

void wr_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8 & 0xff),
                          (unsigned char)(v >> 16 & 0xff), (unsigned char)(v >> 24 & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ofstream& out, std::uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8 & 0xff)};
    out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open audio file: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("not a RIFF/WAVE file: " + path);

    int format = 0, channels = 0, bits = 0, rate = 0;
    std::size_t data_off = 0, data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = rd_u32(buf.data() + pos + 4);
        if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && len >= 16) {
            const unsigned char* f = buf.data() + pos + 8;
            format = rd_u16(f);
            channels = rd_u16(f + 2);
            rate = int(rd_u32(f + 4));
            bits = rd_u16(f + 14);
        } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = std::min<std::size_t>(len, buf.size() - data_off);
        }
        pos += 8 + len + (len & 1);  // chunks are word-aligned
    }
    if (rate <= 0 || channels <= 0 || data_off == 0)
        throw std::runtime_error("malformed WAV file: " + path);
    const bool pcm = format == 1, flt = format == 3;
    if (!(pcm && (bits == 8 || bits == 16)) && !(flt && bits == 32))
        throw std::runtime_error("unsupported WAV encoding (need 8/16-bit PCM or 32-bit float): " +
                                 path);
    if (channels > 2) throw std::runtime_error("unsupported channel count: " + path);

    const int bytes_per = bits / 8;
    const std::size_t n_frames = data_len / (std::size_t(bytes_per) * channels);
    AudioClip clip;
    clip.sample_rate = rate;
    clip.samples.resize(n_frames);
    const unsigned char* d = buf.data() + data_off;
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* s = d + (i * channels + c) * bytes_per;
            if (pcm && bits == 8) {
                acc += (int(*s) - 128) / 128.0;
            } else if (pcm && bits == 16) {
                acc += std::int16_t(rd_u16(s)) / 32768.0;
            } else {
                float v;
                std::memcpy(&v, s, 4);
                acc += v;
            }
        }
        clip.samples[i] = float(std::clamp(acc / channels, -1.0, 1.0));
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) throw std::invalid_argument("invalid sample rate");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write audio file: " + path);
    const std::uint32_t data_len = std::uint32_t(clip.samples.size() * 2);
    out.write("RIFF", 4);
    wr_u32(out, 36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    wr_u32(out, 16);
    wr_u16(out, 1);  // PCM
    wr_u16(out, 1);  // mono
    wr_u32(out, std::uint32_t(clip.sample_rate));
    wr_u32(out, std::uint32_t(clip.sample_rate) * 2);
    wr_u16(out, 2);
    wr_u16(out, 16);
    out.write("data", 4);
    wr_u32(out, data_len);
    for (float s : clip.samples) {
        const int v = int(std::lround(std::clamp(s, -1.f, 1.f) * 32767.f));
        wr_u16(out, std::uint16_t(std::int16_t(v)));
    }
    if (!out) throw std::runtime_error("cannot write audio file: " + path);
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) throw std::invalid_argument("invalid target rate");
    if (clip.sample_rate == target_rate || clip.samples.empty()) {
        AudioClip out = clip;
        out.sample_rate = target_rate;
        return out;
    }
    AudioClip out;
    out.sample_rate = target_rate;
    const double ratio = double(clip.sample_rate) / target_rate;
    const std::size_t n = std::size_t(std::floor((clip.samples.size() - 1) / ratio)) + 1;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i * ratio;
        const std::size_t lo = std::min<std::size_t>(std::size_t(x), clip.samples.size() - 1);
        const std::size_t hi = std::min(lo + 1, clip.samples.size() - 1);
        const double f = x - double(lo);
        out.samples[i] = float((1 - f) * clip.samples[lo] + f * clip.samples[hi]);
    }
    return out;
}

}  // namespace temposteer
