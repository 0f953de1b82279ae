#include "pansharp/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace pansharp {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

PngImage load_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("load_png: cannot open '" + path + "'");

    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw FormatError("load_png: '" + path + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("load_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("load_png: decode error in '" + path + "'");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_swap(png);  // libpng delivers big-endian 16-bit
    png_read_update_info(png, info);

    PngImage img;
    img.height = png_get_image_height(png, info);
    img.width = png_get_image_width(png, info);
    img.channels = png_get_channels(png, info);
    img.bit_depth = png_get_bit_depth(png, info);
    if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("load_png: unsupported channel count " + std::to_string(img.channels));
    }
    if (img.bit_depth != 8 && img.bit_depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("load_png: unsupported bit depth " + std::to_string(img.bit_depth));
    }

    const size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<png_byte> raster(static_cast<size_t>(img.height) * row_bytes);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int64_t y = 0; y < img.height; ++y) rows[static_cast<size_t>(y)] = raster.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const float scale = img.bit_depth == 16 ? 65535.0f : 255.0f;
    img.data.resize(static_cast<size_t>(img.channels * img.height * img.width));
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            for (int64_t c = 0; c < img.channels; ++c) {
                float v;
                if (img.bit_depth == 16) {
                    const uint16_t* row = reinterpret_cast<const uint16_t*>(rows[static_cast<size_t>(y)]);
                    v = static_cast<float>(row[x * img.channels + c]);
                } else {
                    v = static_cast<float>(rows[static_cast<size_t>(y)][x * img.channels + c]);
                }
                img.data[static_cast<size_t>((c * img.height + y) * img.width + x)] = v / scale;
            }
        }
    }
    return img;
}

void save_png(const std::string& path, const float* data, int64_t channels, int64_t height, int64_t width,
              int bit_depth) {
    if (channels != 1 && channels != 3 && channels != 4)
        throw UsageError("save_png: channel count must be 1, 3 or 4");
    if (bit_depth != 8 && bit_depth != 16) throw UsageError("save_png: bit depth must be 8 or 16");

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError("save_png: cannot open '" + path + "'");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("save_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("save_png: encode error for '" + path + "'");
    }
    png_init_io(png, f.get());
    const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY
                     : channels == 3 ? PNG_COLOR_TYPE_RGB
                                     : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const double scale = bit_depth == 16 ? 65535.0 : 255.0;
    const size_t pixel_bytes = static_cast<size_t>(channels) * (bit_depth == 16 ? 2 : 1);
    std::vector<png_byte> row(static_cast<size_t>(width) * pixel_bytes);
    for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
            for (int64_t c = 0; c < channels; ++c) {
                double v = static_cast<double>(data[(c * height + y) * width + x]);
                v = std::min(1.0, std::max(0.0, v));
                const auto q = static_cast<uint32_t>(std::lround(v * scale));
                if (bit_depth == 16)
                    reinterpret_cast<uint16_t*>(row.data())[x * channels + c] = static_cast<uint16_t>(q);
                else
                    row[static_cast<size_t>(x * channels + c)] = static_cast<png_byte>(q);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace pansharp
