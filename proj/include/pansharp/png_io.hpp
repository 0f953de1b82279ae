#pragma once

#include <string>
#include <vector>

#include "pansharp/common.hpp"

namespace pansharp {

// PNG codec for 1/3/4-channel grayscale/RGB/RGBA images at 8 or 16 bits.
// Values map linearly onto [0,1]: 8-bit 255 -> 1.0, 16-bit 65535 -> 1.0.
struct PngImage {
    int64_t channels = 0;
    int64_t height = 0;
    int64_t width = 0;
    int bit_depth = 0;              // bit depth of the source / target file
    std::vector<float> data;        // [channels, height, width] row-major
};

PngImage load_png(const std::string& path);

// data is [channels,height,width] in [0,1]; bit_depth must be 8 or 16.
void save_png(const std::string& path, const float* data, int64_t channels, int64_t height, int64_t width,
              int bit_depth = 16);

}  // namespace pansharp
