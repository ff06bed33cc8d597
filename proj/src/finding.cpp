#include "gaussfind/finding.hpp"

#include "gaussfind/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gaussfind {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidParameter: return "InvalidParameter";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::Unparseable: return "Unparseable";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::DegenerateFinding: return "DegenerateFinding";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::AuthFailure: return "AuthFailure";
        case ErrorCode::FixtureMissing: return "FixtureMissing";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::CorruptImage: return "CorruptImage";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::Conflict: return "Conflict";
        case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    }
    return "Unknown";
}

json Error::to_json() const {
    json j = {{"code", std::string(to_string(code_))}, {"message", what()}};
    if (!detail_.is_null()) j["detail"] = detail_;
    return j;
}

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::CT: return "CT";
        case Modality::MRI: return "MRI";
        case Modality::XRay: return "XRay";
        case Modality::Ultrasound: return "Ultrasound";
        case Modality::Unknown: return "Unknown";
    }
    return "Unknown";
}

Modality modality_from_string(std::string_view s) {
    std::string lower;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (lower == "ct") return Modality::CT;
    if (lower == "mri" || lower == "mr") return Modality::MRI;
    if (lower == "xray" || lower == "cr" || lower == "dx" || lower == "radiograph") return Modality::XRay;
    if (lower == "ultrasound" || lower == "us") return Modality::Ultrasound;
    return Modality::Unknown;
}

std::string_view to_string(CheckName c) {
    switch (c) {
        case CheckName::BoundaryClamp: return "BoundaryClamp";
        case CheckName::CenterRepair: return "CenterRepair";
        case CheckName::ContourClosure: return "ContourClosure";
        case CheckName::GaussianRange: return "GaussianRange";
    }
    return "BoundaryClamp";
}

static CheckName check_from_string(std::string_view s) {
    for (auto c : {CheckName::BoundaryClamp, CheckName::CenterRepair, CheckName::ContourClosure,
                   CheckName::GaussianRange}) {
        if (to_string(c) == s) return c;
    }
    throw Error(ErrorCode::SchemaViolation, "unknown validation check '" + std::string(s) + "'");
}

void check(const ImageMeta& meta) {
    if (meta.width < 1 || meta.height < 1) {
        throw Error(ErrorCode::InvalidParameter, "image dimensions must be positive");
    }
    if (meta.pixel_spacing && !(meta.pixel_spacing->x_mm > 0.0 && meta.pixel_spacing->y_mm > 0.0)) {
        throw Error(ErrorCode::InvalidParameter, "pixel spacing must be positive");
    }
}

double normalize_theta(double theta) {
    constexpr double pi = std::numbers::pi;
    constexpr double half_pi = pi / 2.0;
    if (!std::isfinite(theta)) {
        throw Error(ErrorCode::InvalidParameter, "theta must be finite");
    }
    if (theta >= -half_pi && theta < half_pi) return theta;
    double r = theta - pi * std::floor((theta + half_pi) / pi);
    // floor() above can land one period off when theta + pi/2 rounds.
    if (r >= half_pi) r -= pi;
    if (r < -half_pi) r += pi;
    return r;
}

std::vector<std::size_t> display_order(std::span<const Finding> findings) {
    std::vector<std::size_t> order(findings.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Finding& fa = findings[a];
        const Finding& fb = findings[b];
        if (fa.confidence != fb.confidence) return fa.confidence > fb.confidence;
        if (fa.bbox.y_min != fb.bbox.y_min) return fa.bbox.y_min < fb.bbox.y_min;
        if (fa.bbox.x_min != fb.bbox.x_min) return fa.bbox.x_min < fb.bbox.x_min;
        return fa.id < fb.id;
    });
    return order;
}

std::vector<int> canonicalize_display_order(AnalysisResponse& r) {
    auto order = display_order(r.findings);
    std::vector<Finding> sorted;
    std::vector<int> old_ids;
    sorted.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted.push_back(r.findings[order[i]]);
        old_ids.push_back(sorted.back().id);
        sorted.back().id = static_cast<int>(i) + 1;
    }
    r.findings = std::move(sorted);
    return old_ids;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(json& j, const PixelSpacing& s) { j = {{"x", s.x_mm}, {"y", s.y_mm}}; }

void to_json(json& j, const ImageMeta& m) {
    j = {{"width", m.width},
         {"height", m.height},
         {"modality", std::string(to_string(m.modality))},
         {"source_name", m.source_name}};
    if (m.pixel_spacing) j["pixel_spacing"] = *m.pixel_spacing;
}

void to_json(json& j, const Point& p) { j = {{"x", p.x}, {"y", p.y}}; }

void to_json(json& j, const BoundingBox& b) {
    j = {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

void to_json(json& j, const Contour& c) {
    j = json::array();
    for (const auto& p : c.points) j.push_back(p);
}

void to_json(json& j, const GaussianParams& g) {
    j = {{"mu_x", g.mu_x}, {"mu_y", g.mu_y}, {"sigma_x", g.sigma_x}, {"sigma_y", g.sigma_y}, {"theta", g.theta}};
}

void to_json(json& j, const Finding& f) {
    j = {{"id", f.id},
         {"label", f.label},
         {"description", f.description},
         {"bbox", f.bbox},
         {"center", f.center},
         {"confidence", f.confidence},
         {"clinical_significance", f.clinical_significance}};
    if (f.contour) j["contour"] = *f.contour;
    if (f.gaussian) j["gaussian"] = *f.gaussian;
    if (f.low_trust) j["low_trust"] = true;
}

void to_json(json& j, const AnalysisResponse& r) {
    j = {{"examination_type", r.examination_type},
         {"anatomical_region", r.anatomical_region},
         {"image", r.image},
         {"findings", r.findings},
         {"overall_impression", r.overall_impression}};
}

void to_json(json& j, const ValidationEntry& e) {
    j = {{"finding_id", e.finding_id},
         {"check_name", std::string(to_string(e.check))},
         {"original_value", e.original_value},
         {"corrected_value", e.corrected_value},
         {"origin", e.origin == EditOrigin::Human ? "human" : "model"}};
}

void to_json(json& j, const ValidationLog& l) { j = {{"entries", l.entries}}; }

void from_json(const json& j, PixelSpacing& s) {
    s.x_mm = j.at("x").get<double>();
    s.y_mm = j.at("y").get<double>();
}

void from_json(const json& j, ImageMeta& m) {
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.modality = modality_from_string(j.value("modality", std::string("Unknown")));
    m.source_name = j.value("source_name", std::string());
    if (j.contains("pixel_spacing") && !j["pixel_spacing"].is_null()) {
        m.pixel_spacing = j["pixel_spacing"].get<PixelSpacing>();
    } else {
        m.pixel_spacing.reset();
    }
    check(m);
}

void from_json(const json& j, Point& p) {
    p.x = j.at("x").get<double>();
    p.y = j.at("y").get<double>();
}

void from_json(const json& j, BoundingBox& b) {
    b.x_min = j.at("x_min").get<double>();
    b.y_min = j.at("y_min").get<double>();
    b.x_max = j.at("x_max").get<double>();
    b.y_max = j.at("y_max").get<double>();
}

void from_json(const json& j, GaussianParams& g) {
    g.mu_x = j.at("mu_x").get<double>();
    g.mu_y = j.at("mu_y").get<double>();
    g.sigma_x = j.at("sigma_x").get<double>();
    g.sigma_y = j.at("sigma_y").get<double>();
    g.theta = j.at("theta").get<double>();
}

void from_json(const json& j, Contour& c) { c.points = j.get<std::vector<Point>>(); }

void from_json(const json& j, Finding& f) {
    f.id = j.at("id").get<int>();
    f.label = j.value("label", std::string());
    f.description = j.value("description", std::string());
    f.bbox = j.at("bbox").get<BoundingBox>();
    f.center = j.at("center").get<Point>();
    f.contour.reset();
    if (auto it = j.find("contour"); it != j.end() && !it->is_null()) f.contour = it->get<Contour>();
    f.gaussian.reset();
    if (auto it = j.find("gaussian"); it != j.end() && !it->is_null()) f.gaussian = it->get<GaussianParams>();
    f.confidence = j.value("confidence", 5);
    f.clinical_significance = j.value("clinical_significance", std::string());
    f.low_trust = j.value("low_trust", false);
}

void from_json(const json& j, AnalysisResponse& r) {
    r.examination_type = j.value("examination_type", std::string());
    r.anatomical_region = j.value("anatomical_region", std::string());
    r.image = j.at("image").get<ImageMeta>();
    r.findings = j.at("findings").get<std::vector<Finding>>();
    r.overall_impression = j.value("overall_impression", std::string());
}

void from_json(const json& j, ValidationEntry& e) {
    e.finding_id = j.at("finding_id").get<int>();
    e.check = check_from_string(j.at("check_name").get<std::string>());
    e.original_value = j.value("original_value", std::string());
    e.corrected_value = j.value("corrected_value", std::string());
    e.origin = j.value("origin", std::string("model")) == "human" ? EditOrigin::Human : EditOrigin::Model;
}

void from_json(const json& j, ValidationLog& l) {
    l.entries = j.at("entries").get<std::vector<ValidationEntry>>();
}

}  // namespace gaussfind
