#include "gaussfind/error.hpp"
#include "gaussfind/geometry.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace gaussfind;

namespace {

int count(const std::vector<ValidationEntry>& es, CheckName c) {
    return static_cast<int>(std::count_if(es.begin(), es.end(), [&](const auto& e) { return e.check == c; }));
}

}  // namespace

TEST_CASE("clamp_coordinate matches the piecewise reference") {
    CHECK(clamp_coordinate(-20, 512) == 0);
    CHECK(clamp_coordinate(700, 512) == 511);
    CHECK(clamp_coordinate(511, 512) == 511);
    CHECK(clamp_coordinate(0.25, 1) == 0);
    CHECK(clamp_coordinate(12.5, 512) == 12.5);
    CHECK_THROWS_AS(clamp_coordinate(1, 0), Error);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> raw(-5000, 5000);
    std::uniform_int_distribution<int> ext(1, 4096);
    for (int i = 0; i < 5000; ++i) {
        const double r = raw(rng);
        const int e = ext(rng);
        REQUIRE(clamp_coordinate(r, e) == testing::clamp_oracle(r, e));
    }
}

TEST_CASE("valid finding passes with an empty log apart from Gaussian synthesis") {
    Finding f = testing::make_finding(1, {100, 100, 200, 180});
    f.gaussian = GaussianParams{150, 140, 25, 20, 0.0};
    auto v = validate_finding(f, testing::meta(512, 512));
    CHECK(v.entries.empty());
    CHECK(v.finding == f);
}

TEST_CASE("negative bbox coordinate clamps to zero with one entry") {
    Finding f = testing::make_finding(1, {-20, 10, 50, 60});
    f.gaussian = GaussianParams{20, 30, 5, 5, 0};
    auto v = validate_finding(f, testing::meta(512, 512));
    REQUIRE(v.entries.size() == 1);
    CHECK(v.entries[0].check == CheckName::BoundaryClamp);
    CHECK(v.entries[0].original_value == "x_min=-20");
    CHECK(v.entries[0].corrected_value == "x_min=0");
    CHECK(v.finding.bbox.x_min == 0);
}

TEST_CASE("swapped corners reorder with one entry") {
    Finding f = testing::make_finding(1, {200, 180, 100, 100});
    f.center = {150, 140};
    f.gaussian = GaussianParams{150, 140, 5, 5, 0};
    auto v = validate_finding(f, testing::meta(512, 512));
    REQUIRE(v.entries.size() == 1);
    CHECK(v.finding.bbox == BoundingBox{100, 100, 200, 180});
}

TEST_CASE("center outside bbox is repaired to the nearest bbox point") {
    Finding f = testing::make_finding(4, {100, 100, 200, 200});
    f.center = {250, 150};
    f.gaussian = GaussianParams{150, 150, 5, 5, 0};
    auto v = validate_finding(f, testing::meta(512, 512));
    REQUIRE(count(v.entries, CheckName::CenterRepair) == 1);
    CHECK(v.finding.center == Point{200, 150});
    CHECK(v.entries[0].finding_id == 4);
    CHECK(v.entries[0].origin == EditOrigin::Model);

    auto h = validate_finding(f, testing::meta(512, 512), EditOrigin::Human);
    CHECK(h.entries[0].origin == EditOrigin::Human);
}

TEST_CASE("center outside the image is clamped then repaired") {
    Finding f = testing::make_finding(1, {100, 100, 200, 200});
    f.center = {-40, 900};
    f.gaussian = GaussianParams{150, 150, 5, 5, 0};
    auto v = validate_finding(f, testing::meta(512, 512));
    CHECK(count(v.entries, CheckName::BoundaryClamp) == 2);
    CHECK(count(v.entries, CheckName::CenterRepair) == 1);
    CHECK(v.finding.center == Point{100, 200});
}

TEST_CASE("zero-area bbox after clamping is degenerate") {
    Finding f = testing::make_finding(1, {600, 10, 700, 50});
    try {
        validate_finding(f, testing::meta(512, 512));
        FAIL("expected DegenerateFinding");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateFinding);
        CHECK(e.detail().size() == 2);  // x_min and x_max clamps
    }
    CHECK_THROWS_AS(validate_finding(testing::make_finding(1, {5, 5, 5, 9}), testing::meta(20, 20)), Error);
}

TEST_CASE("contour closure, dedupe and dropping") {
    Finding f = testing::make_finding(1, {0, 0, 100, 100});
    f.gaussian = GaussianParams{50, 50, 10, 10, 0};

    f.contour = Contour{{{10, 10}, {90, 10}, {90, 90}, {10, 10}}};
    auto closed = validate_finding(f, testing::meta(128, 128));
    CHECK(closed.finding.contour->points.size() == 3);
    CHECK(count(closed.entries, CheckName::ContourClosure) == 1);

    f.contour = Contour{{{10, 10}, {10, 10}, {90, 10}, {90, 90}}};
    auto dup = validate_finding(f, testing::meta(128, 128));
    CHECK(dup.finding.contour->points.size() == 3);

    f.contour = Contour{{{10, 10}, {90, 10}, {10, 10}}};
    auto dropped = validate_finding(f, testing::meta(128, 128));
    CHECK_FALSE(dropped.finding.contour.has_value());
    CHECK(count(dropped.entries, CheckName::ContourClosure) == 2);

    f.contour = Contour{{{-5, 10}, {90, 10}, {90, 300}}};
    auto clamped = validate_finding(f, testing::meta(128, 128));
    CHECK(count(clamped.entries, CheckName::BoundaryClamp) == 1);
    CHECK(clamped.finding.contour->points[0] == Point{0, 10});
    CHECK(clamped.finding.contour->points[2] == Point{90, 127});
}

TEST_CASE("missing Gaussian is synthesized from the bbox") {
    Finding f = testing::make_finding(1, {100, 60, 300, 160});
    auto v = validate_finding(f, testing::meta(512, 512));
    REQUIRE(v.finding.gaussian);
    CHECK(*v.finding.gaussian == GaussianParams{200, 110, 50, 25, 0});
    CHECK(count(v.entries, CheckName::GaussianRange) == 1);

    // Tiny boxes still get the minimum spread.
    auto tiny = validate_finding(testing::make_finding(1, {10, 10, 11, 11}), testing::meta(64, 64));
    CHECK(tiny.finding.gaussian->sigma_x == kMinSigma);
}

TEST_CASE("Gaussian parameters are range-checked") {
    Finding f = testing::make_finding(1, {100, 60, 300, 160});
    f.gaussian = GaussianParams{-10, 900, 0.1, 5000, 4.0};
    auto v = validate_finding(f, testing::meta(512, 256));
    REQUIRE(count(v.entries, CheckName::GaussianRange) == 1);
    const auto& g = *v.finding.gaussian;
    CHECK(g.mu_x == 0);
    CHECK(g.mu_y == 255);
    CHECK(g.sigma_x == kMinSigma);
    CHECK(g.sigma_y == 512);
    CHECK(g.theta == doctest::Approx(4.0 - std::numbers::pi));
}

TEST_CASE("validate_analysis drops degenerate findings and renumbers") {
    AnalysisResponse r;
    r.image = testing::meta(100, 100);
    r.findings = {testing::make_finding(1, {10, 10, 20, 20}), testing::make_finding(2, {200, 10, 300, 20}),
                  testing::make_finding(3, {30, 30, 60, 60})};
    auto v = validate_analysis(r);
    REQUIRE(v.response.findings.size() == 2);
    CHECK(v.response.findings[1].id == 2);
    CHECK(v.response.findings[1].bbox == BoundingBox{30, 30, 60, 60});
    const bool logged = std::any_of(v.log.entries.begin(), v.log.entries.end(), [](const auto& e) {
        return e.finding_id == 2 && e.corrected_value == "excluded: degenerate bounding box";
    });
    CHECK(logged);
}

TEST_CASE("validation is idempotent on random findings") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> c(-300, 900);
    for (int i = 0; i < 300; ++i) {
        Finding f = testing::make_finding(1, {c(rng), c(rng), c(rng), c(rng)});
        f.center = {c(rng), c(rng)};
        ImageMeta m = testing::meta(512, 384);
        try {
            auto once = validate_finding(f, m);
            auto twice = validate_finding(once.finding, m);
            REQUIRE(twice.entries.empty());
            REQUIRE(twice.finding == once.finding);
        } catch (const Error& e) {
            REQUIRE(e.code() == ErrorCode::DegenerateFinding);
        }
    }
}
