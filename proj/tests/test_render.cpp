#include "gaussfind/error.hpp"
#include "gaussfind/geometry.hpp"
#include "gaussfind/render.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace gaussfind;

namespace {

std::uint8_t half_up(double v) { return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::floor(v + 0.5)))); }

// Piecewise-linear reference colormap on the rescaled value, before rounding.
std::array<double, 4> colormap_oracle(double v, double threshold) {
    if (v < threshold) return {0, 0, 0, 0};
    const double s = (v - threshold) / (1.0 - threshold);
    double r, g, b;
    if (s <= 0.5) {
        r = 0;
        g = 255 * (s / 0.5);
        b = 255 * (1 - s / 0.5);
    } else if (s <= 0.75) {
        r = 255 * ((s - 0.5) / 0.25);
        g = 255;
        b = 0;
    } else {
        r = 255;
        g = 255 * (1 - (s - 0.75) / 0.25);
        b = 0;
    }
    return {r, g, b, 230 * s};
}

AnalysisResponse one_finding_analysis(int w, int h) {
    AnalysisResponse r;
    r.image = testing::meta(w, h);
    Finding f = testing::make_finding(1, {20, 30, 60, 70}, 7);
    f.gaussian = GaussianParams{40, 50, 6, 5, 0.3};
    r.findings.push_back(f);
    return r;
}

}  // namespace

TEST_CASE("palette has eight distinct colors") {
    const auto p = palette();
    REQUIRE(p.size() == 8);
    std::set<Rgb> unique(p.begin(), p.end());
    CHECK(unique.size() == 8);
}

TEST_CASE("styles follow display order and cycle the palette") {
    std::vector<Finding> fs;
    for (int i = 1; i <= 10; ++i) fs.push_back(testing::make_finding(i, {double(i), 0, double(i) + 5, 5}, i % 3 + 1));
    const auto styles = assign_styles(fs);
    const auto order = display_order(fs);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const auto& st = styles.by_id.at(fs[order[rank]].id);
        CHECK(st.display_number == static_cast<int>(rank) + 1);
        CHECK(st.color == palette()[rank % 8]);
    }
}

TEST_CASE("blend with alpha 0 returns the base exactly") {
    const auto base = testing::noise_rgb(31, 17, 1);
    const auto layer = to_rgba(testing::noise_rgb(31, 17, 2));
    CHECK(blend_overlay(base, layer, 0.0) == base);
    const auto rgba_base = to_rgba(base);
    CHECK(blend_overlay(rgba_base, layer, 0.0) == rgba_base);
}

TEST_CASE("blend matches the per-pixel formula") {
    const auto base = testing::noise_rgb(40, 30, 3);
    auto layer = to_rgba(testing::noise_rgb(40, 30, 4));
    std::mt19937 rng(5);
    for (std::size_t i = 3; i < layer.data.size(); i += 4) layer.data[i] = static_cast<std::uint8_t>(rng());
    for (double alpha : {0.25, 0.6, 1.0}) {
        const auto out = blend_overlay(base, layer, alpha);
        REQUIRE(out.channels == Channels::RGB);
        for (int y = 0; y < base.height; ++y) {
            for (int x = 0; x < base.width; ++x) {
                const double a = alpha * layer.pixel(x, y)[3] / 255.0;
                for (int c = 0; c < 3; ++c) {
                    const double expect = base.pixel(x, y)[c] * (1 - a) + layer.pixel(x, y)[c] * a;
                    REQUIRE(out.pixel(x, y)[c] == half_up(expect));
                }
            }
        }
    }
}

TEST_CASE("blend rejects bad alpha and mismatched sizes") {
    const auto base = testing::noise_rgb(4, 4, 1);
    const auto layer = to_rgba(base);
    CHECK_THROWS_AS(blend_overlay(base, layer, -0.01), Error);
    CHECK_THROWS_AS(blend_overlay(base, layer, 1.01), Error);
    CHECK_THROWS_AS(blend_overlay(base, layer, std::nan("")), Error);
    try {
        blend_overlay(base, to_rgba(testing::noise_rgb(5, 4, 1)), 0.5);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("heatmap colormap anchors and threshold") {
    CHECK(heatmap_color(0.0, 0.0) == std::array<std::uint8_t, 4>{0, 0, 255, 0});
    CHECK(heatmap_color(0.5, 0.0) == std::array<std::uint8_t, 4>{0, 255, 0, 115});
    CHECK(heatmap_color(0.75, 0.0) == std::array<std::uint8_t, 4>{255, 255, 0, 173});
    CHECK(heatmap_color(1.0, 0.0) == std::array<std::uint8_t, 4>{255, 0, 0, 230});
    CHECK(heatmap_color(0.04, 0.05) == std::array<std::uint8_t, 4>{0, 0, 0, 0});
    for (int i = 0; i <= 1000; ++i) {
        const double v = i / 1000.0;
        for (double t : {0.0, 0.05, 0.3}) {
            const auto got = heatmap_color(v, t);
            const auto want = colormap_oracle(v, t);
            // Rounded to the nearest byte; exact ties may land either way in floating point.
            for (int c = 0; c < 4; ++c) REQUIRE(std::abs(got[c] - want[c]) <= 0.5 + 1e-9);
        }
    }
}

TEST_CASE("sketch draws bbox, crosshair and number on a transparent layer") {
    const auto r = one_finding_analysis(100, 100);
    const auto styles = assign_styles(r.findings);
    const auto sketch = render_sketch(r.findings, r.image, styles);
    REQUIRE(sketch.channels == Channels::RGBA);
    const Rgb color = palette()[0];
    const auto is_color = [&](int x, int y) {
        const auto* px = sketch.pixel(x, y);
        return px[0] == color[0] && px[1] == color[1] && px[2] == color[2] && px[3] == 255;
    };
    CHECK(is_color(40, 30));                  // top edge of the bbox
    CHECK(is_color(20, 50));                  // left edge
    CHECK(is_color(45, 50));                  // crosshair arm
    CHECK(sketch.pixel(90, 90)[3] == 0);      // far away stays transparent
    CHECK(sketch.pixel(5, 95)[3] == 0);
    // Number badge sits above the box.
    bool badge = false;
    for (int y = 10; y < 30; ++y) badge = badge || sketch.pixel(22, y)[3] > 0;
    CHECK(badge);
    CHECK(render_sketch(r.findings, r.image, styles) == sketch);
}

TEST_CASE("render_all layers") {
    const auto r = one_finding_analysis(100, 80);
    const auto original = testing::noise_rgb(100, 80, 8);
    const auto set = render_all(original, r, {});
    CHECK(set.overlay.channels == Channels::RGB);
    CHECK(set.heatmap.width == 100);
    CHECK(set.field.max_value() == 1.0);
    // Field peak is at the Gaussian mean.
    std::size_t best = 0;
    for (std::size_t i = 1; i < set.field.values.size(); ++i) {
        if (set.field.values[i] > set.field.values[best]) best = i;
    }
    CHECK(best % 100 == 40);
    CHECK(best / 100 == 50);
    // Far from the finding the heatmap leaves the original untouched.
    CHECK(std::equal(set.heatmap.pixel(95, 5), set.heatmap.pixel(95, 5) + 3, original.pixel(95, 5)));

    RenderOptions zero;
    zero.alpha = 0.0;
    CHECK(render_all(original, r, zero).overlay == original);

    AnalysisResponse empty;
    empty.image = r.image;
    const auto none = render_all(original, empty, {});
    CHECK(none.heatmap == original);
    CHECK(none.field.max_value() == 0.0);

    AnalysisResponse wrong = r;
    wrong.image.width = 99;
    CHECK_THROWS_AS(render_all(original, wrong, {}), Error);
}

TEST_CASE("contours with few points render as a polygon") {
    auto r = one_finding_analysis(64, 64);
    r.findings[0].contour = Contour{{{25, 35}, {55, 35}, {40, 65}}};
    auto v = validate_analysis(r);
    const auto sketch = render_sketch(v.response.findings, v.response.image, assign_styles(v.response.findings));
    CHECK(sketch.pixel(40, 35)[3] == 255);
}
