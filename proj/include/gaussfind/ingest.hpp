#pragma once

#include "gaussfind/finding.hpp"
#include "gaussfind/raster.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gaussfind {

enum class ImageFormat { PNG, JPEG, TIFF, Unknown };

/// Format from magic bytes alone.
ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

/// Modality guessed from tokens of a file name (ct, mri/mr, xray/cr,
/// us/ultrasound); Unknown otherwise.
Modality guess_modality(std::string_view name_hint);

struct LoadedImage {
    RasterImage image;  // always RGB
    ImageMeta meta;
};

/// Decodes PNG, JPEG or TIFF (first frame) to RGB. Magic bytes decide the
/// format; the extension of `name_hint` is only used to tell a damaged
/// supported file (CorruptImage) from an unsupported one.
/// Errors: EmptyInput, UnsupportedFormat, CorruptImage (detail.offset when known).
LoadedImage load_image(std::span<const std::uint8_t> bytes, std::string_view name_hint);

struct PreprocessOptions {
    bool contrast_stretch = false;  // clip at p1/p99, rescale to [0, 255]
    bool median_filter = false;     // 3x3 median

    bool operator==(const PreprocessOptions&) const = default;
};

/// Stretch then median, each only when enabled; dimensions and channel
/// count are preserved.
RasterImage preprocess(const RasterImage& img, const PreprocessOptions& opts);

}  // namespace gaussfind
