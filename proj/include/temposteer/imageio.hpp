#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "temposteer/renderer.hpp"

namespace temposteer {

struct Image8 {
    int w = 0, h = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

void write_png(const std::string& path, const Image8& img);
Image8 read_png(const std::string& path);

Image8 quantize_frame(const Video& v, int frame);
std::vector<Image8> video_to_frames(const Video& v);
Video frames_to_video(const std::vector<Image8>& frames);

// Portable array dump: raw little-endian float64 plus a JSON sidecar with dims.
void write_array(const std::string& path_base, const std::vector<double>& data,
                 const std::vector<int>& dims);

}  // namespace temposteer
