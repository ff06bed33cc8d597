#pragma once

#include "gaussfind/finding.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gaussfind {

/// Correlation is kept strictly inside (-1, 1) by this margin.
inline constexpr double kRhoMargin = 1e-6;

/// W x H grid of non-negative densities, row-major (index = y * width + x).
struct ScalarField {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    ScalarField() = default;
    ScalarField(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double max_value() const;

    bool operator==(const ScalarField&) const = default;
};

/// rho = sin(2 theta) * (sx^2 - sy^2) / (2 sx sy), clamped to
/// [-1 + kRhoMargin, 1 - kRhoMargin]. Throws InvalidParameter for sigma <= 0.
double rho_from_theta(double theta, double sigma_x, double sigma_y);

/// Bivariate normal density at (x, y) with the correlation from rho_from_theta.
double pdf(double x, double y, const GaussianParams& g);

enum class TailCut { Enabled, Disabled };

/// Samples pdf at every integer pixel center. With TailCut::Enabled pixels
/// outside mu +- k*sigma (k >= 5, widened for very peaked densities so the
/// skipped tail stays below 1e-10) are left at zero.
ScalarField rasterize(const GaussianParams& g, const ImageMeta& meta, TailCut cut = TailCut::Enabled);

/// Pointwise maximum. Throws DimensionMismatch unless all fields agree in
/// size, InvalidParameter for an empty list.
ScalarField compose_max(std::span<const ScalarField> fields);

/// Scales by 1 / max so the peak becomes exactly 1; all-zero fields pass through.
ScalarField normalize_unit(const ScalarField& field);

/// Debug/golden form: u32 width, u32 height, then width*height float32, all little-endian.
std::vector<std::uint8_t> serialize_field(const ScalarField& field);
ScalarField deserialize_field(std::span<const std::uint8_t> bytes);

}  // namespace gaussfind
