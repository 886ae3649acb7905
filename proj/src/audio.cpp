#include "temposteer/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace temposteer {
namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2 * std::numbers::pi / double(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void validate(const AudioClip& clip, const EnvelopeParams& p) {
    if (clip.sample_rate <= 0 || clip.samples.empty())
        throw std::invalid_argument("empty audio clip");
    if (p.hop <= 0 || p.window < p.hop) throw std::invalid_argument("window must be >= hop > 0");
    if (!is_pow2(p.window)) throw std::invalid_argument("window must be a power of two");
    if (p.sigma <= 0) throw std::invalid_argument("sigma must be positive");
    if (p.tau_audio < 0 || p.tau_audio > 1)
        throw std::invalid_argument("audio threshold must lie in [0,1]");
}

}  // namespace

std::vector<double> onset_envelope(const AudioClip& clip, const EnvelopeParams& params) {
    validate(clip, params);
    const AudioClip rs = resample_linear(clip, params.sample_rate);
    const int W = params.window, H = params.hop;
    if (int(rs.samples.size()) < W)
        throw std::invalid_argument("audio clip shorter than one analysis window");

    std::vector<double> hann(W);
    for (int i = 0; i < W; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / (W - 1));

    const int n_frames = int((rs.samples.size() - W) / H) + 1;
    const int bins = W / 2 + 1;
    std::vector<double> prev(bins, 0.0), mag(bins);
    std::vector<double> env(n_frames);
    std::vector<std::complex<double>> buf(W);
    for (int f = 0; f < n_frames; ++f) {
        const float* s = rs.samples.data() + std::size_t(f) * H;
        for (int i = 0; i < W; ++i) buf[i] = s[i] * hann[i];
        fft(buf);
        double flux = 0;
        for (int b = 0; b < bins; ++b) {
            mag[b] = std::abs(buf[b]);
            flux += std::max(0.0, mag[b] - prev[b]);
        }
        env[f] = flux;
        std::swap(prev, mag);
    }
    return env;
}

std::vector<double> pool_to_frames(const std::vector<double>& envelope, int frames) {
    if (frames < 1) throw std::invalid_argument("frame count must be >= 1");
    if (envelope.empty()) throw std::invalid_argument("empty envelope");
    const std::size_t L = envelope.size();
    std::vector<double> out(frames, 0.0);
    for (int j = 0; j < frames; ++j) {
        const std::size_t lo = std::size_t(j) * L / frames;  // lo < L for all j
        std::size_t hi = std::size_t(j + 1) * L / frames;
        if (hi <= lo) hi = lo + 1;  // short envelopes: reuse the nearest value
        double acc = 0;
        for (std::size_t i = lo; i < hi; ++i) acc += envelope[i];
        out[j] = acc / double(hi - lo);
    }
    return out;
}

std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma) {
    if (sigma <= 0) throw std::invalid_argument("sigma must be positive");
    if (x.empty()) return {};
    const int r = std::max(1, int(std::ceil(4 * sigma)));
    std::vector<double> kern(2 * r + 1);
    double ksum = 0;
    for (int k = -r; k <= r; ++k) {
        kern[k + r] = std::exp(-0.5 * (k / sigma) * (k / sigma));
        ksum += kern[k + r];
    }
    for (double& v : kern) v /= ksum;

    const int n = int(x.size());
    auto reflect = [&](int i) {
        // reflect without repeating the edge sample: -1 -> 1, n -> n-2
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
            if (n == 1) return 0;
        }
        return i;
    };
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0;
        for (int k = -r; k <= r; ++k) acc += kern[k + r] * x[std::size_t(reflect(i + k))];
        out[i] = acc;
    }
    return out;
}

TemporalMask audio_to_mask(const AudioClip& clip, int frames, const EnvelopeParams& params) {
    const std::vector<double> env = onset_envelope(clip, params);
    const std::vector<double> pooled = pool_to_frames(env, frames);
    const std::vector<double> norm = minmax_normalize(pooled);
    const std::vector<double> smoothed = gaussian_smooth(norm, params.sigma);
    TemporalMask mask;
    mask.label = "audio";
    mask.values.resize(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i) {
        const double v = norm[i] >= params.tau_audio ? norm[i] : smoothed[i];
        mask.values[i] = std::clamp(v, 0.0, 1.0);
    }
    return mask;
}

}  // namespace temposteer
