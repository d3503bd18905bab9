#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sitsx/image.hpp"

namespace sitsx {

// Raw 8-bit raster as stored on disk (1 = grayscale, 3 = RGB).
struct Raster8 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // interleaved row-major [y][x][c]

    std::uint8_t at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

// PNG read/write (8-bit, lossless, non-interlaced). Throws UnreadableImage /
// DataError on failure. Writing is deterministic byte-for-byte.
Raster8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster8& img);

// Baseline JPEG decode (EuroSAT-style corpora ship as JPEG).
Raster8 read_jpeg(const std::filesystem::path& path);

// Dispatch on file extension (.png / .jpg / .jpeg).
Raster8 read_raster(const std::filesystem::path& path);

// float [0,1] <-> quantized 8-bit conversions.
Raster8 to_raster8(const Image& img);
Image to_image(const Raster8& r);

// Grayscale masks: value = round(255 * m).
Raster8 mask_to_raster8(const std::vector<float>& mask, int side);

void write_image_png(const std::filesystem::path& path, const Image& img);
Image read_image(const std::filesystem::path& path);

}  // namespace sitsx
