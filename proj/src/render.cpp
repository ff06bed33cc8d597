#include "gaussfind/render.hpp"

#include "gaussfind/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gaussfind {

namespace {

constexpr std::array<Rgb, 8> kPalette{{
    {230, 25, 75},    // red
    {60, 180, 75},    // green
    {0, 130, 200},    // blue
    {255, 225, 25},   // yellow
    {240, 50, 230},   // magenta
    {70, 240, 240},   // cyan
    {245, 130, 48},   // orange
    {145, 30, 180},   // purple
}};

constexpr int kSplineSamples = 16;
constexpr int kEllipseSamples = 180;
constexpr int kGlyphScale = 2;

// 5x7 digits, one byte per row, bit 4 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigits{{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
}};

std::uint8_t round_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

// Accumulates the coverage of one primitive (max over its pieces) and then
// composites it in a single pass, so joints of a polyline are not painted twice.
class Canvas {
public:
    explicit Canvas(RasterImage& layer)
        : layer_(layer), coverage_(static_cast<std::size_t>(layer.width) * layer.height, 0.0) {}

    void segment(Point a, Point b, double width) {
        const double reach = width / 2.0 + 0.5;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
        const int x1 = std::min(layer_.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
        const int y1 = std::min(layer_.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double t = len2 > 0.0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double ex = a.x + t * dx - x;
                const double ey = a.y + t * dy - y;
                const double c = std::clamp(reach - std::sqrt(ex * ex + ey * ey), 0.0, 1.0);
                cover(x, y, c);
            }
        }
    }

    void polyline(const std::vector<Point>& pts, bool closed, double width) {
        if (pts.size() == 1) segment(pts[0], pts[0], width);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) segment(pts[i], pts[i + 1], width);
        if (closed && pts.size() > 2) segment(pts.back(), pts.front(), width);
    }

    void fill_rect(int x0, int y0, int w, int h) {
        for (int y = std::max(0, y0); y < std::min(layer_.height, y0 + h); ++y) {
            for (int x = std::max(0, x0); x < std::min(layer_.width, x0 + w); ++x) cover(x, y, 1.0);
        }
    }

    // Source-over of `color` at `opacity` times the accumulated coverage.
    void paint(const Rgb& color, double opacity = 1.0) {
        for (std::size_t idx : touched_) {
            const double a = coverage_[idx] * opacity;
            coverage_[idx] = 0.0;
            if (a <= 0.0) continue;
            std::uint8_t* px = layer_.data.data() + idx * 4;
            const double da = px[3] / 255.0;
            const double out_a = a + da * (1.0 - a);
            for (int c = 0; c < 3; ++c) {
                px[c] = round_byte((color[c] * a + px[c] * da * (1.0 - a)) / out_a);
            }
            px[3] = round_byte(out_a * 255.0);
        }
        touched_.clear();
    }

private:
    void cover(int x, int y, double c) {
        if (c <= 0.0) return;
        const std::size_t idx = static_cast<std::size_t>(y) * layer_.width + x;
        if (coverage_[idx] == 0.0) touched_.push_back(idx);
        coverage_[idx] = std::max(coverage_[idx], c);
    }

    RasterImage& layer_;
    std::vector<double> coverage_;
    std::vector<std::size_t> touched_;
};

// Closed uniform Catmull-Rom spline (tension 0.5) through every vertex.
std::vector<Point> catmull_rom_closed(const std::vector<Point>& p) {
    const std::size_t n = p.size();
    std::vector<Point> out;
    out.reserve(n * kSplineSamples);
    for (std::size_t i = 0; i < n; ++i) {
        const Point& p0 = p[(i + n - 1) % n];
        const Point& p1 = p[i];
        const Point& p2 = p[(i + 1) % n];
        const Point& p3 = p[(i + 2) % n];
        for (int s = 0; s < kSplineSamples; ++s) {
            const double t = static_cast<double>(s) / kSplineSamples;
            const double t2 = t * t;
            const double t3 = t2 * t;
            const auto eval = [&](double a0, double a1, double a2, double a3) {
                return 0.5 * (2.0 * a1 + (-a0 + a2) * t + (2.0 * a0 - 5.0 * a1 + 4.0 * a2 - a3) * t2 +
                              (-a0 + 3.0 * a1 - 3.0 * a2 + a3) * t3);
            };
            out.push_back({eval(p0.x, p1.x, p2.x, p3.x), eval(p0.y, p1.y, p2.y, p3.y)});
        }
    }
    return out;
}

std::vector<Point> ellipse_outline(const GaussianParams& g) {
    const double a = kEllipseSigmas * g.sigma_x;
    const double b = kEllipseSigmas * g.sigma_y;
    const double c = std::cos(g.theta);
    const double s = std::sin(g.theta);
    std::vector<Point> out;
    out.reserve(kEllipseSamples);
    for (int i = 0; i < kEllipseSamples; ++i) {
        const double t = 2.0 * std::numbers::pi * i / kEllipseSamples;
        const double ex = a * std::cos(t);
        const double ey = b * std::sin(t);
        out.push_back({g.mu_x + ex * c - ey * s, g.mu_y + ex * s + ey * c});
    }
    return out;
}

void draw_number(Canvas& canvas, int number, int x, int y, const Rgb& color) {
    const std::string digits = std::to_string(number);
    const int advance = 6 * kGlyphScale;
    const int w = static_cast<int>(digits.size()) * advance + kGlyphScale;
    const int h = 7 * kGlyphScale + 2 * kGlyphScale;
    canvas.fill_rect(x, y, w, h);
    canvas.paint({0, 0, 0}, 0.65);
    for (std::size_t k = 0; k < digits.size(); ++k) {
        const auto& glyph = kDigits[static_cast<std::size_t>(digits[k] - '0')];
        for (int row = 0; row < 7; ++row) {
            for (int col = 0; col < 5; ++col) {
                if (glyph[row] & (0x10 >> col)) {
                    canvas.fill_rect(x + kGlyphScale + static_cast<int>(k) * advance + col * kGlyphScale,
                                     y + kGlyphScale + row * kGlyphScale, kGlyphScale, kGlyphScale);
                }
            }
        }
    }
    canvas.paint(color);
}

}  // namespace

std::span<const Rgb> palette() { return kPalette; }

StyleAssignment assign_styles(std::span<const Finding> findings) {
    StyleAssignment out;
    const auto order = display_order(findings);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        FindingStyle style;
        style.color = kPalette[rank % kPalette.size()];
        style.display_number = static_cast<int>(rank) + 1;
        out.by_id[findings[order[rank]].id] = style;
    }
    return out;
}

RasterImage render_sketch(std::span<const Finding> findings, const ImageMeta& meta, const StyleAssignment& styles) {
    check(meta);
    RasterImage layer(meta.width, meta.height, Channels::RGBA);
    Canvas canvas(layer);

    // draw in display order so higher-ranked findings end up on top
    auto order = display_order(findings);
    std::reverse(order.begin(), order.end());
    for (std::size_t idx : order) {
        const Finding& f = findings[idx];
        FindingStyle style;
        if (auto it = styles.by_id.find(f.id); it != styles.by_id.end()) style = it->second;

        if (f.contour && !f.contour->points.empty()) {
            const auto& pts = f.contour->points;
            canvas.polyline(pts.size() >= 4 ? catmull_rom_closed(pts) : pts, true, style.line_width);
            canvas.paint(style.color);
        }

        const BoundingBox& b = f.bbox;
        canvas.polyline({{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}}, true,
                        style.line_width);
        canvas.paint(style.color);

        const double half = kCrosshairLength / 2.0;
        canvas.segment({f.center.x - half, f.center.y}, {f.center.x + half, f.center.y}, style.line_width);
        canvas.segment({f.center.x, f.center.y - half}, {f.center.x, f.center.y + half}, style.line_width);
        canvas.paint(style.color);

        if (f.gaussian) {
            canvas.polyline(ellipse_outline(*f.gaussian), true, style.line_width * 0.75);
            canvas.paint(style.color, 0.85);
        }

        const int label_h = 9 * kGlyphScale;
        const int lx = static_cast<int>(std::floor(b.x_min));
        int ly = static_cast<int>(std::floor(b.y_min)) - label_h - 1;
        if (ly < 0) ly = static_cast<int>(std::floor(b.y_min)) + 2;
        draw_number(canvas, style.display_number, lx, ly, style.color);
    }
    return layer;
}

RasterImage blend_overlay(const RasterImage& base, const RasterImage& layer, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidParameter, "alpha must lie in [0, 1]");
    if (base.width != layer.width || base.height != layer.height) {
        throw Error(ErrorCode::DimensionMismatch, "overlay layer and base image differ in size");
    }
    const RasterImage top = to_rgba(layer);
    RasterImage out = to_rgba(base);
    const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = alpha * (top.data[i * 4 + 3] / 255.0);
        if (a == 0.0) continue;
        std::uint8_t* px = &out.data[i * 4];
        for (int c = 0; c < 3; ++c) px[c] = round_byte(px[c] * (1.0 - a) + top.data[i * 4 + c] * a);
        px[3] = round_byte(px[3] * (1.0 - a) + 255.0 * a);
    }
    // An opaque base stays opaque, so dropping alpha again loses nothing.
    return base.channels == Channels::RGB ? to_rgb(out) : out;
}

std::array<std::uint8_t, 4> heatmap_color(double value, double threshold) {
    if (!(value >= threshold)) return {0, 0, 0, 0};
    double s = threshold < 1.0 ? (value - threshold) / (1.0 - threshold) : 1.0;
    s = std::clamp(s, 0.0, 1.0);

    struct Anchor {
        double at;
        double r, g, b;
    };
    static constexpr std::array<Anchor, 4> anchors{{
        {0.0, 0, 0, 255},
        {0.5, 0, 255, 0},
        {0.75, 255, 255, 0},
        {1.0, 255, 0, 0},
    }};
    std::size_t k = 0;
    while (k + 2 < anchors.size() && s > anchors[k + 1].at) ++k;
    const Anchor& lo = anchors[k];
    const Anchor& hi = anchors[k + 1];
    const double f = (s - lo.at) / (hi.at - lo.at);
    return {round_byte(lo.r + (hi.r - lo.r) * f), round_byte(lo.g + (hi.g - lo.g) * f),
            round_byte(lo.b + (hi.b - lo.b) * f), round_byte(230.0 * s)};
}

RasterImage colorize_heatmap(const ScalarField& field, double threshold) {
    RasterImage out(field.width, field.height, Channels::RGBA);
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        const auto px = heatmap_color(field.values[i], threshold);
        std::copy(px.begin(), px.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * 4));
    }
    return out;
}

RenderSet render_all(const RasterImage& original, const AnalysisResponse& analysis, const RenderOptions& opts) {
    const ImageMeta& meta = analysis.image;
    if (original.width != meta.width || original.height != meta.height) {
        throw Error(ErrorCode::DimensionMismatch, "analysis dimensions do not match the image");
    }
    RenderSet out;
    const auto styles = assign_styles(analysis.findings);
    out.sketch = render_sketch(analysis.findings, meta, styles);

    std::vector<ScalarField> fields;
    for (const auto& f : analysis.findings) {
        if (f.gaussian) fields.push_back(rasterize(*f.gaussian, meta));
    }
    out.field = fields.empty() ? ScalarField(meta.width, meta.height) : normalize_unit(compose_max(fields));

    const RasterImage heat = colorize_heatmap(out.field, opts.threshold);
    out.overlay = blend_overlay(original, out.sketch, opts.alpha);
    out.heatmap = blend_overlay(original, heat, 1.0);
    out.composite = blend_overlay(out.heatmap, out.sketch, opts.alpha);
    return out;
}

}  // namespace gaussfind
