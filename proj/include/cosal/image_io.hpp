#pragma once

// Minimal PNG reading/writing on top of libpng.

#include <png.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosal {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit pixels, row-major.
struct Image8 {
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;
};

inline Image8 read_png(const std::string& path, std::size_t channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw ImageIoError("cannot read PNG '" + path + "': " + image.message);
    }
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 out;
    out.width = image.width;
    out.height = image.height;
    out.channels = channels;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageIoError("cannot decode PNG '" + path + "': " + msg);
    }
    return out;
}

inline void write_png(const std::string& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
    if (img.pixels.size() != img.width * img.height * img.channels) throw std::invalid_argument("write_png: bad buffer");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw ImageIoError("cannot write PNG '" + path + "': " + image.message);
    }
}

namespace detail {

// Kept free of objects with destructors so the libpng longjmp is safe.
inline bool write_mask_rows(png_structp png, png_infop info, std::FILE* fp, std::size_t width, std::size_t height,
                            const std::uint8_t* mask, std::uint8_t* row) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 1, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = (width + 7) / 8;
    for (std::size_t y = 0; y < height; ++y) {
        std::fill(row, row + stride, std::uint8_t{0});
        for (std::size_t x = 0; x < width; ++x)
            if (mask[y * width + x]) row[x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    return true;
}

}  // namespace detail

/// Writes a binary mask (non-zero = set) as a 1-bit grayscale PNG.
inline void write_mask_png(const std::string& path, std::size_t width, std::size_t height,
                           const std::vector<std::uint8_t>& mask) {
    if (mask.size() != width * height) throw std::invalid_argument("write_mask_png: bad buffer");
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw ImageIoError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("libpng initialisation failed");
    }
    std::vector<std::uint8_t> row((width + 7) / 8);
    const bool ok = detail::write_mask_rows(png, info, fp.get(), width, height, mask.data(), row.data());
    png_destroy_write_struct(&png, &info);
    if (!ok) throw ImageIoError("failed writing mask PNG '" + path + "'");
}

/// Reads any grayscale-convertible PNG as a binary mask (value > 127 = set).
inline std::vector<std::uint8_t> read_mask_png(const std::string& path, std::size_t& width, std::size_t& height) {
    Image8 img = read_png(path, 1);
    width = img.width;
    height = img.height;
    std::vector<std::uint8_t> mask(img.pixels.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.pixels[i] > 127 ? 1 : 0;
    return mask;
}

}  // namespace cosal
