#include "gaussfind/pipeline.hpp"

#include "gaussfind/digest.hpp"
#include "gaussfind/error.hpp"
#include "gaussfind/geometry.hpp"
#include "gaussfind/response_parser.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace gaussfind {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Prompting: return "prompting";
        case Stage::Parsing: return "parsing";
        case Stage::Validating: return "validating";
        case Stage::Rendering: return "rendering";
        case Stage::Reporting: return "reporting";
    }
    return "prompting";
}

json to_json(const PipelineOptions& o) {
    json j = {{"preprocess", {{"contrast_stretch", o.preprocess.contrast_stretch},
                              {"median_filter", o.preprocess.median_filter}}},
              {"alpha", o.render.alpha},
              {"threshold", o.render.threshold},
              {"require_gaussian", o.require_gaussian},
              {"require_contours", o.require_contours},
              {"language", o.language}};
    if (o.spacing) j["spacing"] = *o.spacing;
    return j;
}

PipelineOptions pipeline_options_from_json(const json& j) {
    PipelineOptions o;
    if (auto it = j.find("preprocess"); it != j.end()) {
        o.preprocess.contrast_stretch = it->value("contrast_stretch", false);
        o.preprocess.median_filter = it->value("median_filter", false);
    }
    o.render.alpha = j.value("alpha", kDefaultOverlayAlpha);
    o.render.threshold = j.value("threshold", kDefaultHeatmapThreshold);
    o.require_gaussian = j.value("require_gaussian", true);
    o.require_contours = j.value("require_contours", true);
    o.language = j.value("language", std::string("en"));
    if (auto it = j.find("spacing"); it != j.end() && !it->is_null()) o.spacing = it->get<PixelSpacing>();
    return o;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_atomic(const fs::path& p, std::span<const std::uint8_t> bytes) {
    const fs::path tmp = p.string() + ".tmp-" + random_token(6);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::IoError, "cannot move " + tmp.string() + " into place");
    }
}

void write_atomic(const fs::path& p, std::string_view text) { write_atomic(p, as_bytes(text)); }

LoadedImage prepare_image(std::span<const std::uint8_t> bytes, std::string_view name_hint, const PipelineOptions& opts) {
    LoadedImage img = load_image(bytes, name_hint);
    img.image = preprocess(img.image, opts.preprocess);
    if (opts.spacing) img.meta.pixel_spacing = opts.spacing;
    check(img.meta);
    return img;
}

json analysis_document(const AnalysisResponse& analysis, const ValidationLog& log,
                       const std::vector<std::string>& warnings) {
    json doc = analysis;
    doc["validation_log"] = log;
    if (!warnings.empty()) doc["parse_warnings"] = warnings;
    return doc;
}

LoadedAnalysis load_analysis(const json& doc, const std::optional<ImageMeta>& meta_override) {
    ImageMeta meta;
    if (meta_override) {
        meta = *meta_override;
    } else {
        try {
            meta = doc.at("image").get<ImageMeta>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, std::string("analysis has no usable image description: ") + e.what(),
                        {{"paths", {"image"}}});
        }
    }
    LoadedAnalysis out;
    out.analysis = coerce_response(doc, meta).response;
    if (auto it = doc.find("validation_log"); it != doc.end() && it->is_object()) {
        try {
            out.log = it->get<ValidationLog>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, std::string("validation_log: ") + e.what(),
                        {{"paths", {"validation_log"}}});
        }
    }
    return out;
}

ClinicalReport write_artifacts(const RasterImage& original, const AnalysisResponse& analysis, const ValidationLog& log,
                               const PipelineOptions& opts, const fs::path& out_dir, const ReportContext& report_ctx,
                               const std::vector<std::string>& warnings) {
    const auto dump = [](const json& j) { return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n"; };
    write_atomic(out_dir / files::kAnalysis, dump(analysis_document(analysis, log, warnings)));
    write_atomic(out_dir / files::kValidation, dump(json(log)));

    const RenderSet layers = render_all(original, analysis, opts.render);
    write_atomic(out_dir / files::kSketch, encode_png(layers.sketch));
    write_atomic(out_dir / files::kOverlay, encode_png(layers.overlay));
    write_atomic(out_dir / files::kHeatmap, encode_png(layers.heatmap));
    write_atomic(out_dir / files::kComposite, encode_png(layers.composite));

    ClinicalReport report = build_report(analysis, log, opts.spacing, report_ctx);
    write_atomic(out_dir / files::kReportJson, export_report(report, ReportFormat::JSON));
    write_atomic(out_dir / files::kReportMd, export_report(report, ReportFormat::Markdown));
    write_atomic(out_dir / files::kReportHtml, export_report(report, ReportFormat::HTML));
    return report;
}

PipelineResult run_pipeline(const LoadedImage& image, const BackendConfig& backend, const PipelineOptions& opts,
                            const fs::path& out_dir, VlmGateway& gateway, const ProgressFn& progress,
                            const ReportContext& report_ctx) {
    const auto stage = [&](Stage s) {
        if (progress) progress(s);
    };
    fs::create_directories(out_dir);
    const auto original_png = encode_png(image.image);
    write_atomic(out_dir / files::kOriginal, original_png);

    PipelineResult out;
    stage(Stage::Prompting);
    PromptSpec spec;
    spec.image_meta = image.meta;
    spec.require_gaussian = opts.require_gaussian;
    spec.require_contours = opts.require_contours;
    spec.language = opts.language;
    out.raw = gateway.analyze_image(original_png, spec, backend);
    write_atomic(out_dir / files::kRaw, out.raw.text);

    stage(Stage::Parsing);
    auto parsed = parse_response(out.raw.text, image.meta);
    out.warnings = std::move(parsed.warnings);

    stage(Stage::Validating);
    auto validated = validate_analysis(parsed.response);
    out.analysis = std::move(validated.response);
    out.log = std::move(validated.log);
    // Display numbering follows confidence; make ids match it and keep the
    // log pointing at the same findings.
    const auto old_ids = canonicalize_display_order(out.analysis);
    std::map<int, int> new_id;
    for (std::size_t i = 0; i < old_ids.size(); ++i) new_id[old_ids[i]] = static_cast<int>(i) + 1;
    for (auto& e : out.log.entries) {
        if (auto it = new_id.find(e.finding_id); it != new_id.end()) e.finding_id = it->second;
    }

    stage(Stage::Rendering);
    ReportContext ctx = report_ctx;
    if (ctx.backend_id.empty() || ctx.backend_id == "unknown") ctx.backend_id = out.raw.backend_id;
    const RenderSet layers = render_all(image.image, out.analysis, opts.render);
    write_atomic(out_dir / files::kSketch, encode_png(layers.sketch));
    write_atomic(out_dir / files::kOverlay, encode_png(layers.overlay));
    write_atomic(out_dir / files::kHeatmap, encode_png(layers.heatmap));
    write_atomic(out_dir / files::kComposite, encode_png(layers.composite));

    stage(Stage::Reporting);
    out.report = build_report(out.analysis, out.log, opts.spacing, ctx);
    const auto dump = [](const json& j) { return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n"; };
    write_atomic(out_dir / files::kAnalysis, dump(analysis_document(out.analysis, out.log, out.warnings)));
    write_atomic(out_dir / files::kValidation, dump(json(out.log)));
    write_atomic(out_dir / files::kReportJson, export_report(out.report, ReportFormat::JSON));
    write_atomic(out_dir / files::kReportMd, export_report(out.report, ReportFormat::Markdown));
    write_atomic(out_dir / files::kReportHtml, export_report(out.report, ReportFormat::HTML));
    return out;
}

}  // namespace gaussfind
