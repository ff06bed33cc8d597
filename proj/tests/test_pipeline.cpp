#include "gaussfind/error.hpp"
#include "gaussfind/pipeline.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace gaussfind;
using nlohmann::json;

namespace {

const char* kReply = R"(```json
{"examination_type": "CT", "anatomical_region": "chest",
 "findings": [
  {"id": 1, "label": "nodule", "bbox": {"x_min": -12, "y_min": 10, "x_max": 40, "y_max": 50},
   "center": {"x": 14, "y": 30}, "confidence": 8,
   "gaussian": {"mu_x": 14, "mu_y": 30, "sigma_x": 6, "sigma_y": 5, "theta": 0.2}},
  {"id": 2, "label": "opacity", "bbox": [60, 60, 100, 90], "center": [80, 75], "confidence": 3}
 ],
 "overall_impression": "Two findings."}
```)";

LoadedImage test_image() {
    PipelineOptions opts;
    return prepare_image(encode_png(testing::noise_rgb(128, 96, 11)), "case_ct.png", opts);
}

BackendConfig scripted(const std::string& text) {
    BackendConfig b;
    b.kind = BackendKind::Scripted;
    b.scripted_text = text;
    return b;
}

}  // namespace

TEST_CASE("pipeline writes the complete layout") {
    testing::TempDir out;
    VlmGateway gw;
    std::vector<Stage> stages;
    const auto img = test_image();
    const auto res = run_pipeline(img, scripted(kReply), {}, out.path(), gw, [&](Stage s) { stages.push_back(s); });

    for (const char* f : files::kLayout) {
        CAPTURE(f);
        CHECK(std::filesystem::is_regular_file(out / f));
    }
    CHECK(stages == std::vector<Stage>{Stage::Prompting, Stage::Parsing, Stage::Validating, Stage::Rendering,
                                       Stage::Reporting});
    CHECK(testing::slurp_text(out / files::kRaw) == kReply);
    CHECK(res.analysis.findings.size() == 2);
    CHECK(res.analysis.image.modality == Modality::CT);
    CHECK(res.report.header.backend_id == "scripted");

    const auto doc = json::parse(testing::slurp_text(out / files::kAnalysis));
    CHECK(doc.contains("validation_log"));
    const auto loaded = load_analysis(doc);
    CHECK(loaded.analysis == res.analysis);
    CHECK(loaded.log == res.log);
    // The clamp on x_min is recorded for the first finding.
    const bool clamped = std::any_of(res.log.entries.begin(), res.log.entries.end(), [](const auto& e) {
        return e.check == CheckName::BoundaryClamp && e.original_value == "x_min=-12";
    });
    CHECK(clamped);

    const auto report = report_from_json(json::parse(testing::slurp_text(out / files::kReportJson)));
    CHECK(report == res.report);
    const auto png = load_image(testing::slurp(out / files::kOverlay), "overlay.png");
    CHECK(png.meta.width == 128);
    CHECK(png.meta.height == 96);
}

TEST_CASE("unparseable output keeps the original and raw text only") {
    testing::TempDir out;
    VlmGateway gw;
    try {
        run_pipeline(test_image(), scripted("I cannot analyze this image."), {}, out.path(), gw);
        FAIL("expected Unparseable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Unparseable);
    }
    CHECK(std::filesystem::is_regular_file(out / files::kOriginal));
    CHECK(testing::slurp_text(out / files::kRaw) == "I cannot analyze this image.");
    CHECK_FALSE(std::filesystem::exists(out / files::kAnalysis));
    CHECK_FALSE(std::filesystem::exists(out / files::kOverlay));
}

TEST_CASE("options JSON round trip") {
    PipelineOptions o;
    o.preprocess.contrast_stretch = true;
    o.render.alpha = 0.3;
    o.render.threshold = 0.1;
    o.spacing = PixelSpacing{0.5, 0.75};
    o.require_contours = false;
    o.language = "de";
    const auto back = pipeline_options_from_json(to_json(o));
    CHECK(back.preprocess.contrast_stretch);
    CHECK_FALSE(back.preprocess.median_filter);
    CHECK(back.render.alpha == 0.3);
    CHECK(back.render.threshold == 0.1);
    CHECK(back.spacing == o.spacing);
    CHECK_FALSE(back.require_contours);
    CHECK(back.language == "de");
}

TEST_CASE("prepare_image applies spacing and preprocessing") {
    PipelineOptions o;
    o.spacing = PixelSpacing{0.4, 0.4};
    o.preprocess.median_filter = true;
    const auto img = prepare_image(encode_png(testing::noise_rgb(20, 10, 2)), "x.png", o);
    CHECK(img.meta.pixel_spacing == o.spacing);
    CHECK(img.image == preprocess(testing::noise_rgb(20, 10, 2), o.preprocess));
}

TEST_CASE("file helpers") {
    testing::TempDir dir;
    write_atomic(dir / "a.txt", std::string_view("first"));
    write_atomic(dir / "a.txt", std::string_view("second"));
    CHECK(read_text(dir / "a.txt") == "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 1);  // no temp files left behind
    try {
        read_bytes(dir / "missing.bin");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
    CHECK_THROWS_AS(write_atomic(dir / "no" / "such" / "dir.txt", std::string_view("x")), Error);
}
