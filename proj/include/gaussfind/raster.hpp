#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gaussfind {

enum class Channels : int { RGB = 3, RGBA = 4 };

/// 8-bit interleaved image, row-major, top-left origin.
struct RasterImage {
    int width = 0;
    int height = 0;
    Channels channels = Channels::RGB;
    std::vector<std::uint8_t> data;

    RasterImage() = default;
    RasterImage(int w, int h, Channels c)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * static_cast<int>(c), 0) {}

    int channel_count() const { return static_cast<int>(channels); }
    std::uint8_t* pixel(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channel_count();
    }
    const std::uint8_t* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channel_count();
    }

    bool operator==(const RasterImage&) const = default;
};

/// RGB -> RGBA with opaque alpha; RGBA is returned unchanged.
RasterImage to_rgba(const RasterImage& img);

/// Drops alpha (no compositing).
RasterImage to_rgb(const RasterImage& img);

/// PNG bytes at a fixed compression setting, so identical pixels always
/// encode to identical files.
std::vector<std::uint8_t> encode_png(const RasterImage& img);

}  // namespace gaussfind
