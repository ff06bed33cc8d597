#include "gaussfind/gaussian_field.hpp"

#include "gaussfind/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace gaussfind {

namespace {

constexpr double kTailFloor = 1e-10;
constexpr double kMinTailSigmas = 5.0;

void check_sigmas(double sx, double sy) {
    if (!(sx > 0.0) || !(sy > 0.0) || !std::isfinite(sx) || !std::isfinite(sy)) {
        throw Error(ErrorCode::InvalidParameter, "sigma_x and sigma_y must be positive and finite");
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
    return v;
}

}  // namespace

double ScalarField::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double rho_from_theta(double theta, double sigma_x, double sigma_y) {
    check_sigmas(sigma_x, sigma_y);
    const double rho = std::sin(2.0 * theta) * ((sigma_x * sigma_x - sigma_y * sigma_y) / (2.0 * sigma_x * sigma_y));
    return std::clamp(rho, -1.0 + kRhoMargin, 1.0 - kRhoMargin);
}

double pdf(double x, double y, const GaussianParams& g) {
    const double rho = rho_from_theta(g.theta, g.sigma_x, g.sigma_y);
    const double one_minus_rho2 = 1.0 - rho * rho;
    const double dx = x - g.mu_x;
    const double dy = y - g.mu_y;
    const double q = dx * dx / (g.sigma_x * g.sigma_x) - 2.0 * rho * dx * dy / (g.sigma_x * g.sigma_y) +
                     dy * dy / (g.sigma_y * g.sigma_y);
    const double norm = 1.0 / (2.0 * std::numbers::pi * g.sigma_x * g.sigma_y * std::sqrt(one_minus_rho2));
    return norm * std::exp(-q / (2.0 * one_minus_rho2));
}

ScalarField rasterize(const GaussianParams& g, const ImageMeta& meta, TailCut cut) {
    check(meta);
    check_sigmas(g.sigma_x, g.sigma_y);
    ScalarField field(meta.width, meta.height);

    int x0 = 0, x1 = meta.width - 1, y0 = 0, y1 = meta.height - 1;
    if (cut == TailCut::Enabled) {
        // The density is bounded by peak * exp(-u^2 / 2) with u the marginal
        // standardized offset along either axis, so the rectangle mu +- k*sigma
        // drops at most peak * exp(-k^2 / 2).
        const double peak = pdf(g.mu_x, g.mu_y, g);
        double k = kMinTailSigmas;
        if (peak > kTailFloor) k = std::max(k, std::sqrt(2.0 * std::log(peak / kTailFloor)));
        const auto lo = [](double v) { return static_cast<int>(std::ceil(v)); };
        const auto hi = [](double v) { return static_cast<int>(std::floor(v)); };
        x0 = std::max(x0, lo(std::max(-1.0, g.mu_x - k * g.sigma_x)));
        x1 = std::min(x1, hi(std::min(static_cast<double>(meta.width), g.mu_x + k * g.sigma_x)));
        y0 = std::max(y0, lo(std::max(-1.0, g.mu_y - k * g.sigma_y)));
        y1 = std::min(y1, hi(std::min(static_cast<double>(meta.height), g.mu_y + k * g.sigma_y)));
    }

    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) field.at(x, y) = pdf(x, y, g);
    }
    return field;
}

ScalarField compose_max(std::span<const ScalarField> fields) {
    if (fields.empty()) throw Error(ErrorCode::InvalidParameter, "compose_max needs at least one field");
    ScalarField out = fields.front();
    for (const auto& f : fields.subspan(1)) {
        if (f.width != out.width || f.height != out.height) {
            throw Error(ErrorCode::DimensionMismatch, "fields differ in size");
        }
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::max(out.values[i], f.values[i]);
    }
    return out;
}

ScalarField normalize_unit(const ScalarField& field) {
    const double peak = field.max_value();
    if (!(peak > 0.0)) return field;
    ScalarField out = field;
    for (double& v : out.values) v /= peak;
    return out;
}

std::vector<std::uint8_t> serialize_field(const ScalarField& field) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + field.values.size() * 4);
    put_u32(out, static_cast<std::uint32_t>(field.width));
    put_u32(out, static_cast<std::uint32_t>(field.height));
    for (double v : field.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

ScalarField deserialize_field(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw Error(ErrorCode::SchemaViolation, "field blob shorter than its header");
    const auto w = get_u32(bytes, 0);
    const auto h = get_u32(bytes, 4);
    const std::uint64_t n = static_cast<std::uint64_t>(w) * h;
    if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16 || bytes.size() != 8 + n * 4) {
        throw Error(ErrorCode::SchemaViolation, "field blob size does not match its header");
    }
    ScalarField f(static_cast<int>(w), static_cast<int>(h));
    for (std::uint64_t i = 0; i < n; ++i) {
        f.values[i] = std::bit_cast<float>(get_u32(bytes, 8 + i * 4));
    }
    return f;
}

}  // namespace gaussfind
