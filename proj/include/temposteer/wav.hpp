#pragma once

#include <string>
#include <vector>

namespace temposteer {

struct AudioClip {
    std::vector<float> samples;  // mono, in [-1, 1]
    int sample_rate = 0;
};

// PCM WAV reader: 8/16-bit integer or 32-bit float, mono or stereo
// (stereo is averaged to mono).
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);  // 16-bit PCM

AudioClip resample_linear(const AudioClip& clip, int target_rate);

}  // namespace temposteer
