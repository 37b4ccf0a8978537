#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/errors.hpp"

namespace signet {

// 8-bit grayscale raster, as scanned. Row-major, intensity 0 (ink) .. 255 (paper).
struct RawImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    RawImage() = default;
    RawImage(int h, int w, std::uint8_t fill = 0) : height(h), width(w) {
        if (h < 1 || w < 1) throw InvalidDimensions("image dims must be positive");
        pixels.assign(static_cast<std::size_t>(h) * w, fill);
    }

    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Float raster used after inversion; background exactly 0, foreground in (0,255].
struct FloatImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    FloatImage() = default;
    FloatImage(int h, int w, float fill = 0.f) : height(h), width(w) {
        if (h < 1 || w < 1) throw InvalidDimensions("image dims must be positive");
        pixels.assign(static_cast<std::size_t>(h) * w, fill);
    }

    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// 8-bit grayscale PNG round trip (libpng underneath).
RawImage read_png_gray8(const std::string& path);
void write_png_gray8(const std::string& path, const RawImage& img);

// Quantizes (round, clamp to [0,255]) for visual inspection output.
RawImage quantize_to_u8(const FloatImage& img);

}  // namespace signet
