#pragma once

#include <vector>

#include "temposteer/losses.hpp"
#include "temposteer/wav.hpp"

namespace temposteer {

struct EnvelopeParams {
    int window = 1024;        // STFT window length in samples (power of two)
    int hop = 256;            // analysis hop in samples
    double tau_audio = 0.5;   // threshold above which peaks pass through unsmoothed
    double sigma = 1.0;       // Gaussian smoothing std, in mask frames
    int sample_rate = 16000;  // clips are resampled here before analysis
};

// Spectral-flux onset strength: magnitude STFT (Hann window), half-wave
// rectified positive spectral difference summed over bins, one value per hop.
std::vector<double> onset_envelope(const AudioClip& clip, const EnvelopeParams& params);

// Adaptive mean pooling: frame j averages envelope indices in
// [floor(j*L/T), floor((j+1)*L/T)).
std::vector<double> pool_to_frames(const std::vector<double>& envelope, int frames);

// Threshold-or-smooth mask shaping: values >= tau pass through exactly, the
// rest come from a Gaussian-smoothed copy (truncated at 4 sigma, reflect
// padding); output clipped to [0,1].
std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma);

TemporalMask audio_to_mask(const AudioClip& clip, int frames, const EnvelopeParams& params);

}  // namespace temposteer
