#pragma once

#include "gaussfind/finding.hpp"
#include "gaussfind/gaussian_field.hpp"
#include "gaussfind/raster.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace gaussfind {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr double kDefaultOverlayAlpha = 0.6;
inline constexpr double kDefaultHeatmapThreshold = 0.05;
/// Semi-axes of the drawn ellipse are this many standard deviations.
inline constexpr double kEllipseSigmas = 2.0;
inline constexpr double kCrosshairLength = 12.0;

struct FindingStyle {
    Rgb color{};
    int display_number = 0;
    double line_width = 2.0;
};

/// finding id -> style
struct StyleAssignment {
    std::map<int, FindingStyle> by_id;
};

/// Eight mutually distinct colors; cycles beyond.
std::span<const Rgb> palette();

/// Numbers findings 1..n in display order (see display_order) and hands out
/// palette colors in the same order.
StyleAssignment assign_styles(std::span<const Finding> findings);

/// Transparent RGBA layer with, per finding: smoothed contour, bbox,
/// center crosshair, 2-sigma ellipse and the display number.
RasterImage render_sketch(std::span<const Finding> findings, const ImageMeta& meta, const StyleAssignment& styles);

/// Source-over of `layer` onto `base` with the layer alpha scaled by `alpha`.
/// The result has the base's channel layout. Throws DimensionMismatch /
/// InvalidParameter.
RasterImage blend_overlay(const RasterImage& base, const RasterImage& layer, double alpha);

/// Maps a unit-peak field to RGBA: below `threshold` transparent, otherwise
/// blue -> green -> yellow -> red with alpha rising to 230 at the peak.
RasterImage colorize_heatmap(const ScalarField& field, double threshold = kDefaultHeatmapThreshold);

/// RGBA of one field value under colorize_heatmap's mapping.
std::array<std::uint8_t, 4> heatmap_color(double value, double threshold);

struct RenderOptions {
    double alpha = kDefaultOverlayAlpha;
    double threshold = kDefaultHeatmapThreshold;
};

struct RenderSet {
    RasterImage sketch;     // annotation layer on transparent background
    RasterImage overlay;    // sketch blended over the original
    RasterImage heatmap;    // colorized max-composed field blended over the original
    RasterImage composite;  // original + heatmap + sketch
    ScalarField field;      // unit-normalized max composition
};

/// Produces all four layers for validated findings.
RenderSet render_all(const RasterImage& original, const AnalysisResponse& analysis, const RenderOptions& opts = {});

}  // namespace gaussfind
