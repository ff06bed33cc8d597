#include "gaussfind/report.hpp"

#include "gaussfind/error.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>

namespace gaussfind {

using nlohmann::json;

namespace {

std::string fixed1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

std::string pixels(double v) {
    if (v == std::floor(v) && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    return fixed1(v);
}

std::string coord(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

std::string html_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string md_text(std::string_view s) {
    // keep model text from opening headings or breaking list items
    std::string out;
    for (char c : s) out.push_back(c == '\n' || c == '\r' ? ' ' : c);
    return out.empty() ? "—" : out;
}

std::string gaussian_text(const GaussianParams& g) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "μx=%.1f, μy=%.1f, σx=%.2f px, σy=%.2f px, θ=%.3f rad", g.mu_x, g.mu_y, g.sigma_x,
                  g.sigma_y, g.theta);
    return buf;
}

std::string entry_text(const ValidationEntry& e) {
    return "Finding " + std::to_string(e.finding_id) + " " + std::string(to_string(e.check)) +
           (e.origin == EditOrigin::Human ? " (after manual edit)" : "") + ": " + e.original_value + " → " +
           e.corrected_value;
}

struct HeaderRow {
    std::string name;
    std::string value;
};

std::vector<HeaderRow> header_rows(const ReportHeader& h) {
    return {{"Examination type", h.examination_type.empty() ? "Not stated" : h.examination_type},
            {"Anatomical region", h.anatomical_region.empty() ? "Not stated" : h.anatomical_region},
            {"Modality", h.modality},
            {"Image dimensions", std::to_string(h.image_width) + "×" + std::to_string(h.image_height) + " px"},
            {"Source", h.source_name.empty() ? "—" : h.source_name},
            {"Generated", h.generated_at},
            {"Analysis backend", h.backend_id}};
}

std::vector<HeaderRow> finding_rows(const ReportFinding& f) {
    std::vector<HeaderRow> rows{
        {"Label", f.label.empty() ? "Unlabelled finding" : f.label},
        {"Description", f.description.empty() ? "—" : f.description},
        {"Center", "(" + coord(f.center.x) + ", " + coord(f.center.y) + ") px"},
        {"Bounding box", "(" + coord(f.bbox.x_min) + ", " + coord(f.bbox.y_min) + ") – (" + coord(f.bbox.x_max) + ", " +
                             coord(f.bbox.y_max) + ") px"},
        {"Dimensions", f.dimensions},
        {"Gaussian parameters", gaussian_text(f.gaussian)},
        {"Confidence", std::to_string(f.confidence) + "/10"},
        {"Clinical significance", f.clinical_significance.empty() ? "—" : f.clinical_significance},
    };
    if (f.low_trust) rows.push_back({"Localization", "Low trust: the model gave no coordinates for this finding"});
    return rows;
}

std::string summary_line(const ValidationSummary& v) {
    return std::to_string(v.boundary_clamps) + " boundary clamp(s), " + std::to_string(v.center_repairs) +
           " center repair(s), " + std::to_string(v.contour_closures) + " contour correction(s), " +
           std::to_string(v.gaussian_range) + " Gaussian parameter correction(s); " + std::to_string(v.human_edits) +
           " after manual edits.";
}

std::string to_markdown(const ClinicalReport& r) {
    std::ostringstream o;
    o << "# Clinical Imaging Report\n\n## Header\n\n";
    for (const auto& row : header_rows(r.header)) o << "- **" << row.name << ":** " << md_text(row.value) << "\n";

    o << "\n## Findings\n\n";
    if (r.findings.empty()) o << "No findings reported.\n";
    else o << r.findings.size() << " finding(s), numbered as in the annotated images.\n";
    for (const auto& f : r.findings) {
        o << "\n## Finding " << f.display_number << "\n\n";
        for (const auto& row : finding_rows(f)) o << "- **" << row.name << ":** " << md_text(row.value) << "\n";
    }

    o << "\n## Impression\n\n" << md_text(r.impression) << "\n";
    o << "\n## Recommendations\n\n";
    for (const auto& rec : r.recommendations) o << "- " << md_text(rec) << "\n";
    o << "\n## Caveats\n\n";
    for (const auto& c : r.caveats) o << "- " << c << "\n";
    o << "\n## Validation Appendix\n\n" << summary_line(r.validation_appendix) << "\n";
    if (!r.validation_appendix.entries.empty()) o << "\n";
    for (const auto& e : r.validation_appendix.entries) o << "- " << md_text(entry_text(e)) << "\n";
    return o.str();
}

void html_list(std::ostringstream& o, const std::vector<HeaderRow>& rows) {
    o << "<table>\n";
    for (const auto& row : rows) {
        o << "<tr><th>" << html_escape(row.name) << "</th><td>" << html_escape(row.value) << "</td></tr>\n";
    }
    o << "</table>\n";
}

std::string to_html(const ClinicalReport& r) {
    std::ostringstream o;
    o << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
      << "<title>Clinical Imaging Report</title>\n"
      << "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto;}"
         "th{text-align:left;padding-right:1em;vertical-align:top;}"
         "section{margin-bottom:1.5em;}.caveat{color:#7a4b00;}</style>\n"
      << "</head>\n<body>\n<h1>Clinical Imaging Report</h1>\n";

    o << "<section id=\"header\">\n<h2>Header</h2>\n";
    html_list(o, header_rows(r.header));
    o << "</section>\n";

    o << "<section id=\"findings\">\n<h2>Findings</h2>\n";
    if (r.findings.empty()) o << "<p>No findings reported.</p>\n";
    for (const auto& f : r.findings) {
        o << "<article class=\"finding\">\n<h3>Finding " << f.display_number << "</h3>\n";
        html_list(o, finding_rows(f));
        o << "</article>\n";
    }
    o << "</section>\n";

    o << "<section id=\"impression\">\n<h2>Impression</h2>\n<p>" << html_escape(r.impression) << "</p>\n</section>\n";
    o << "<section id=\"recommendations\">\n<h2>Recommendations</h2>\n<ul>\n";
    for (const auto& rec : r.recommendations) o << "<li>" << html_escape(rec) << "</li>\n";
    o << "</ul>\n</section>\n";
    o << "<section id=\"caveats\">\n<h2>Caveats</h2>\n<ul>\n";
    for (const auto& c : r.caveats) o << "<li class=\"caveat\">" << html_escape(c) << "</li>\n";
    o << "</ul>\n</section>\n";
    o << "<section id=\"validation\">\n<h2>Validation Appendix</h2>\n<p>"
      << html_escape(summary_line(r.validation_appendix)) << "</p>\n";
    if (!r.validation_appendix.entries.empty()) {
        o << "<ul>\n";
        for (const auto& e : r.validation_appendix.entries) o << "<li>" << html_escape(entry_text(e)) << "</li>\n";
        o << "</ul>\n";
    }
    o << "</section>\n</body>\n</html>\n";
    return o.str();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

}  // namespace

const std::vector<std::string>& report_caveats() {
    static const std::vector<std::string> caveats{
        "This report was generated automatically by a vision-language model and has not been reviewed by a "
        "clinician.",
        "Locations, dimensions and confidence scores are model estimates; they must be verified against the source "
        "images before any clinical use.",
        "Absence of a reported finding does not exclude pathology.",
        "Not intended as a standalone diagnostic device.",
    };
    return caveats;
}

std::string format_utc(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ClinicalReport build_report(const AnalysisResponse& r, const ValidationLog& log, std::optional<PixelSpacing> spacing,
                            const ReportContext& ctx) {
    if (!spacing) spacing = r.image.pixel_spacing;
    ClinicalReport rep;
    rep.header.examination_type = r.examination_type;
    rep.header.anatomical_region = r.anatomical_region;
    rep.header.modality = std::string(to_string(r.image.modality));
    rep.header.image_width = r.image.width;
    rep.header.image_height = r.image.height;
    rep.header.source_name = r.image.source_name;
    rep.header.generated_at = format_utc(ctx.clock ? ctx.clock() : std::chrono::system_clock::now());
    rep.header.backend_id = ctx.backend_id;

    bool any_high = false;
    bool any_low = false;
    const auto order = display_order(r.findings);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const Finding& f = r.findings[order[rank]];
        ReportFinding b;
        b.display_number = static_cast<int>(rank) + 1;
        b.finding_id = f.id;
        b.label = f.label;
        b.description = f.description;
        b.center = f.center;
        b.bbox = f.bbox;
        b.width_px = f.bbox.width();
        b.height_px = f.bbox.height();
        b.dimensions = pixels(b.width_px) + "×" + pixels(b.height_px) + " px";
        if (spacing) {
            b.width_mm = b.width_px * spacing->x_mm;
            b.height_mm = b.height_px * spacing->y_mm;
            b.dimensions += " (" + fixed1(*b.width_mm) + "×" + fixed1(*b.height_mm) + " mm)";
        }
        b.gaussian = f.gaussian.value_or(GaussianParams{f.center.x, f.center.y, 1.0, 1.0, 0.0});
        b.confidence = f.confidence;
        b.clinical_significance = f.clinical_significance;
        b.low_trust = f.low_trust;
        any_high = any_high || f.confidence >= kHighConfidence;
        any_low = any_low || f.confidence <= kLowConfidence;
        rep.findings.push_back(std::move(b));
    }

    rep.impression = r.overall_impression.empty() ? "No overall impression was provided." : r.overall_impression;
    if (r.findings.empty()) rep.recommendations.emplace_back(kRecommendNoAbnormality);
    if (any_high) rep.recommendations.emplace_back(kRecommendSpecialist);
    if (any_low) rep.recommendations.emplace_back(kRecommendRepeat);
    if (!r.findings.empty() && !any_high && !any_low) {
        rep.recommendations.emplace_back("Review the reported findings in their clinical context.");
    }
    rep.caveats = report_caveats();

    auto& v = rep.validation_appendix;
    v.entries = log.entries;
    for (const auto& e : log.entries) {
        switch (e.check) {
            case CheckName::BoundaryClamp: ++v.boundary_clamps; break;
            case CheckName::CenterRepair: ++v.center_repairs; break;
            case CheckName::ContourClosure: ++v.contour_closures; break;
            case CheckName::GaussianRange: ++v.gaussian_range; break;
        }
        if (e.origin == EditOrigin::Human) ++v.human_edits;
    }
    return rep;
}

std::optional<ReportFormat> report_format_from_string(std::string_view s) {
    if (s == "json") return ReportFormat::JSON;
    if (s == "md" || s == "markdown") return ReportFormat::Markdown;
    if (s == "html") return ReportFormat::HTML;
    return std::nullopt;
}

json report_to_json(const ClinicalReport& r) {
    json findings = json::array();
    for (const auto& f : r.findings) {
        findings.push_back({{"display_number", f.display_number},
                            {"finding_id", f.finding_id},
                            {"label", f.label},
                            {"description", f.description},
                            {"center", f.center},
                            {"bbox", f.bbox},
                            {"width_px", f.width_px},
                            {"height_px", f.height_px},
                            {"width_mm", optional_number(f.width_mm)},
                            {"height_mm", optional_number(f.height_mm)},
                            {"dimensions", f.dimensions},
                            {"gaussian", f.gaussian},
                            {"confidence", f.confidence},
                            {"clinical_significance", f.clinical_significance},
                            {"low_trust", f.low_trust}});
    }
    const auto& h = r.header;
    const auto& v = r.validation_appendix;
    return {{"header",
             {{"examination_type", h.examination_type},
              {"anatomical_region", h.anatomical_region},
              {"modality", h.modality},
              {"image_width", h.image_width},
              {"image_height", h.image_height},
              {"source_name", h.source_name},
              {"generated_at", h.generated_at},
              {"backend_id", h.backend_id}}},
            {"findings", findings},
            {"impression", r.impression},
            {"recommendations", r.recommendations},
            {"caveats", r.caveats},
            {"validation_appendix",
             {{"boundary_clamps", v.boundary_clamps},
              {"center_repairs", v.center_repairs},
              {"contour_closures", v.contour_closures},
              {"gaussian_range", v.gaussian_range},
              {"human_edits", v.human_edits},
              {"entries", v.entries}}}};
}

ClinicalReport report_from_json(const json& j) {
    try {
        ClinicalReport r;
        const auto& h = j.at("header");
        r.header.examination_type = h.at("examination_type").get<std::string>();
        r.header.anatomical_region = h.at("anatomical_region").get<std::string>();
        r.header.modality = h.at("modality").get<std::string>();
        r.header.image_width = h.at("image_width").get<int>();
        r.header.image_height = h.at("image_height").get<int>();
        r.header.source_name = h.at("source_name").get<std::string>();
        r.header.generated_at = h.at("generated_at").get<std::string>();
        r.header.backend_id = h.at("backend_id").get<std::string>();
        for (const auto& fj : j.at("findings")) {
            ReportFinding f;
            f.display_number = fj.at("display_number").get<int>();
            f.finding_id = fj.at("finding_id").get<int>();
            f.label = fj.at("label").get<std::string>();
            f.description = fj.at("description").get<std::string>();
            f.center = fj.at("center").get<Point>();
            f.bbox = fj.at("bbox").get<BoundingBox>();
            f.width_px = fj.at("width_px").get<double>();
            f.height_px = fj.at("height_px").get<double>();
            f.width_mm = read_optional(fj, "width_mm");
            f.height_mm = read_optional(fj, "height_mm");
            f.dimensions = fj.at("dimensions").get<std::string>();
            f.gaussian = fj.at("gaussian").get<GaussianParams>();
            f.confidence = fj.at("confidence").get<int>();
            f.clinical_significance = fj.at("clinical_significance").get<std::string>();
            f.low_trust = fj.value("low_trust", false);
            r.findings.push_back(std::move(f));
        }
        r.impression = j.at("impression").get<std::string>();
        r.recommendations = j.at("recommendations").get<std::vector<std::string>>();
        r.caveats = j.at("caveats").get<std::vector<std::string>>();
        const auto& v = j.at("validation_appendix");
        r.validation_appendix.boundary_clamps = v.at("boundary_clamps").get<int>();
        r.validation_appendix.center_repairs = v.at("center_repairs").get<int>();
        r.validation_appendix.contour_closures = v.at("contour_closures").get<int>();
        r.validation_appendix.gaussian_range = v.at("gaussian_range").get<int>();
        r.validation_appendix.human_edits = v.at("human_edits").get<int>();
        r.validation_appendix.entries = v.at("entries").get<std::vector<ValidationEntry>>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("report JSON: ") + e.what());
    }
}

std::string export_report(const ClinicalReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::JSON: return report_to_json(report).dump(2, ' ', false, json::error_handler_t::replace) + "\n";
        case ReportFormat::Markdown: return to_markdown(report);
        case ReportFormat::HTML: return to_html(report);
    }
    return {};
}

}  // namespace gaussfind
