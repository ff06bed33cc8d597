#pragma once

#include "gaussfind/finding.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gaussfind {

inline constexpr int kHighConfidence = 8;
inline constexpr int kLowConfidence = 3;

inline constexpr const char* kRecommendSpecialist = "Correlate clinically; specialist review advised.";
inline constexpr const char* kRecommendRepeat =
    "Low-confidence finding; repeat imaging or expert over-read suggested.";
inline constexpr const char* kRecommendNoAbnormality = "No abnormality detected by automated analysis.";

struct ReportHeader {
    std::string examination_type;
    std::string anatomical_region;
    std::string modality;
    int image_width = 0;
    int image_height = 0;
    std::string source_name;
    std::string generated_at;  // UTC, YYYY-MM-DDTHH:MM:SSZ
    std::string backend_id;

    bool operator==(const ReportHeader&) const = default;
};

struct ReportFinding {
    int display_number = 0;
    int finding_id = 0;
    std::string label;
    std::string description;
    Point center;
    BoundingBox bbox;
    double width_px = 0.0;
    double height_px = 0.0;
    std::optional<double> width_mm;  // present iff pixel spacing is known
    std::optional<double> height_mm;
    std::string dimensions;          // e.g. "200×100 px (100.0×50.0 mm)"
    GaussianParams gaussian;
    int confidence = 0;
    std::string clinical_significance;
    bool low_trust = false;

    bool operator==(const ReportFinding&) const = default;
};

struct ValidationSummary {
    int boundary_clamps = 0;
    int center_repairs = 0;
    int contour_closures = 0;
    int gaussian_range = 0;
    int human_edits = 0;
    std::vector<ValidationEntry> entries;

    bool operator==(const ValidationSummary&) const = default;
};

struct ClinicalReport {
    ReportHeader header;
    std::vector<ReportFinding> findings;  // in display order
    std::string impression;
    std::vector<std::string> recommendations;
    std::vector<std::string> caveats;
    ValidationSummary validation_appendix;

    bool operator==(const ClinicalReport&) const = default;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct ReportContext {
    std::string backend_id = "unknown";
    Clock clock;  // defaults to system_clock::now
};

/// Standard caveat block included in every report.
const std::vector<std::string>& report_caveats();

/// `spacing` overrides r.image.pixel_spacing when given.
ClinicalReport build_report(const AnalysisResponse& r, const ValidationLog& log,
                            std::optional<PixelSpacing> spacing = std::nullopt, const ReportContext& ctx = {});

enum class ReportFormat { JSON, Markdown, HTML };

std::optional<ReportFormat> report_format_from_string(std::string_view s);

/// Serialized report. Markdown/HTML sections: Header, Findings, Impression,
/// Recommendations, Caveats, Validation Appendix.
std::string export_report(const ClinicalReport& report, ReportFormat format);

nlohmann::json report_to_json(const ClinicalReport& report);
ClinicalReport report_from_json(const nlohmann::json& j);

std::string format_utc(std::chrono::system_clock::time_point t);

}  // namespace gaussfind
