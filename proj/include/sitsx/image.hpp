#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sitsx/errors.hpp"

namespace sitsx {

// Dense channel-major float image, values nominally in [0,1].
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // layout: [c][y][x]

    Image() = default;
    Image(int c, int h, int w, float fill = 0.f)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void clip01() {
        for (float& v : data) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    }
};

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(where) + ": image shapes differ");
}

// 8-bit quantization used by the on-disk PNG format.
inline std::uint8_t quantize8(float v) {
    float q = std::round(v * 255.f);
    if (q < 0.f) q = 0.f;
    if (q > 255.f) q = 255.f;
    return static_cast<std::uint8_t>(q);
}

inline float dequantize8(std::uint8_t v) { return static_cast<float>(v) / 255.f; }

// The atomic sample: T co-located images of one P x P tile.
// Index T-1 (last) is the post-event timestep by convention.
struct PatchTimeSeries {
    std::vector<Image> frames;
    std::string aoi_id;
    int patch_row = 0;
    int patch_col = 0;
    std::vector<std::string> timestamps;  // stored, never interpreted

    int steps() const { return static_cast<int>(frames.size()); }

    void validate() const {
        if (frames.size() < 2)
            throw SeriesTooShort("patch time series needs at least 2 timesteps");
        for (size_t t = 1; t < frames.size(); ++t)
            if (!frames[t].same_shape(frames[0]))
                throw ShapeMismatch("patch time series frames disagree on shape");
    }
};

}  // namespace sitsx
