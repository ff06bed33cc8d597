#pragma once

// Shared test helpers. Reference computations here are written independently
// of the library code they check.

#include "gaussfind/finding.hpp"
#include "gaussfind/raster.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path fixture_dir() { return GAUSSFIND_FIXTURE_DIR; }

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string slurp_text(const std::filesystem::path& p) {
    auto b = slurp(p);
    return {b.begin(), b.end()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "gaussfind") {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Clamp reference: piecewise definition.
inline double clamp_oracle(double raw, int extent) {
    const double hi = extent - 1;
    if (raw < 0.0) return 0.0;
    if (raw > hi) return hi;
    return raw;
}

/// Bivariate normal density via the covariance matrix and its explicit
/// inverse, with the correlation supplied by the caller.
inline double normal2_oracle(double x, double y, double mx, double my, double sx, double sy, double rho) {
    const double a = sx * sx;
    const double b = rho * sx * sy;
    const double d = sy * sy;
    const double det = a * d - b * b;
    const double ia = d / det;
    const double ib = -b / det;
    const double id = a / det;
    const double dx = x - mx;
    const double dy = y - my;
    const double m = dx * (ia * dx + ib * dy) + dy * (ib * dx + id * dy);
    return std::exp(-0.5 * m) / (2.0 * std::numbers::pi * std::sqrt(det));
}

/// Solid RGB image.
inline gaussfind::RasterImage solid_rgb(int w, int h, std::array<std::uint8_t, 3> c) {
    gaussfind::RasterImage img;
    img.width = w;
    img.height = h;
    img.channels = gaussfind::Channels::RGB;
    img.data.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = c[0];
        img.data[i + 1] = c[1];
        img.data[i + 2] = c[2];
    }
    return img;
}

/// Deterministic pseudo-random RGB image.
inline gaussfind::RasterImage noise_rgb(int w, int h, unsigned seed) {
    std::mt19937 rng(seed);
    gaussfind::RasterImage img = solid_rgb(w, h, {0, 0, 0});
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() & 0xFF);
    return img;
}

inline gaussfind::Finding make_finding(int id, gaussfind::BoundingBox b, int confidence = 5) {
    gaussfind::Finding f;
    f.id = id;
    f.label = "finding " + std::to_string(id);
    f.bbox = b;
    f.center = b.midpoint();
    f.confidence = confidence;
    return f;
}

inline gaussfind::ImageMeta meta(int w, int h) {
    gaussfind::ImageMeta m;
    m.width = w;
    m.height = h;
    return m;
}

}  // namespace testing
