#include "temposteer/imageio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <png.h>

namespace temposteer {

void write_png(const std::string& path, const Image8& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y)
        png_write_row(png, const_cast<png_bytep>(img.rgb.data() + std::size_t(y) * img.w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    Image8 img;
    img.w = int(png_get_image_width(png, info));
    img.h = int(png_get_image_height(png, info));
    img.rgb.resize(std::size_t(img.w) * img.h * 3);
    for (int y = 0; y < img.h; ++y)
        png_read_row(png, img.rgb.data() + std::size_t(y) * img.w * 3, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

Image8 quantize_frame(const Video& v, int frame) {
    Image8 img;
    img.w = v.w;
    img.h = v.h;
    img.rgb.resize(std::size_t(v.w) * v.h * 3);
    const float* f = v.frame(frame);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        const float x = std::min(1.f, std::max(0.f, f[i]));
        img.rgb[i] = std::uint8_t(std::lround(x * 255.f));
    }
    return img;
}

std::vector<Image8> video_to_frames(const Video& v) {
    std::vector<Image8> out;
    for (int j = 0; j < v.frames; ++j) out.push_back(quantize_frame(v, j));
    return out;
}

Video frames_to_video(const std::vector<Image8>& frames) {
    if (frames.empty()) throw std::invalid_argument("no frames");
    Video v;
    v.frames = int(frames.size());
    v.h = frames[0].h;
    v.w = frames[0].w;
    v.data.resize(std::size_t(v.frames) * v.h * v.w * 3);
    for (int j = 0; j < v.frames; ++j) {
        if (frames[j].w != v.w || frames[j].h != v.h)
            throw std::invalid_argument("frame size mismatch");
        float* f = v.frame(j);
        for (std::size_t i = 0; i < frames[j].rgb.size(); ++i)
            f[i] = float(frames[j].rgb[i]) / 255.f;
    }
    return v;
}

void write_array(const std::string& path_base, const std::vector<double>& data,
                 const std::vector<int>& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= std::size_t(d);
    if (n != data.size()) throw std::invalid_argument("dims do not match data size");
    std::ofstream bin(path_base + ".f64", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + path_base + ".f64");
    bin.write(reinterpret_cast<const char*>(data.data()),
              std::streamsize(data.size() * sizeof(double)));
    nlohmann::json meta{{"dtype", "float64-le"}, {"dims", dims}, {"order", "row-major"}};
    std::ofstream side(path_base + ".json");
    side << meta.dump(2) << "\n";
}

}  // namespace temposteer
