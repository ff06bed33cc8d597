#pragma once

// Domain model shared by every pipeline stage, plus its canonical JSON form.
//
// Coordinates use a top-left origin with x to the right and y downward;
// integer coordinates address pixel centers, so a W x H image spans
// [0, W-1] x [0, H-1].

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gaussfind {

enum class Modality { CT, MRI, XRay, Ultrasound, Unknown };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct PixelSpacing {
    double x_mm = 1.0;  // millimetres per pixel along x
    double y_mm = 1.0;

    bool operator==(const PixelSpacing&) const = default;
};

struct ImageMeta {
    int width = 1;
    int height = 1;
    Modality modality = Modality::Unknown;
    std::optional<PixelSpacing> pixel_spacing;
    std::string source_name;

    bool operator==(const ImageMeta&) const = default;
};

/// Throws InvalidParameter when dimensions or spacing are out of range.
void check(const ImageMeta& meta);

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    Point midpoint() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
    bool contains(const Point& p) const {
        return x_min <= p.x && p.x <= x_max && y_min <= p.y && p.y <= y_max;
    }

    bool operator==(const BoundingBox&) const = default;
};

/// Closed polygon; the edge from the last point back to the first is implicit.
struct Contour {
    std::vector<Point> points;

    bool operator==(const Contour&) const = default;
};

struct GaussianParams {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double theta = 0.0;  // radians, canonical range [-pi/2, pi/2)

    bool operator==(const GaussianParams&) const = default;
};

struct Finding {
    int id = 1;
    std::string label;
    std::string description;
    BoundingBox bbox;
    Point center;
    std::optional<Contour> contour;
    // Absent only between parsing and validation; the validator synthesizes it.
    std::optional<GaussianParams> gaussian;
    int confidence = 5;
    std::string clinical_significance;
    // Set when the model gave no usable coordinates and the bbox was defaulted.
    bool low_trust = false;

    bool operator==(const Finding&) const = default;
};

struct AnalysisResponse {
    std::string examination_type;
    std::string anatomical_region;
    ImageMeta image;
    std::vector<Finding> findings;
    std::string overall_impression;

    bool operator==(const AnalysisResponse&) const = default;
};

enum class CheckName { BoundaryClamp, CenterRepair, ContourClosure, GaussianRange };

std::string_view to_string(CheckName c);

enum class EditOrigin { Model, Human };

struct ValidationEntry {
    int finding_id = 0;
    CheckName check = CheckName::BoundaryClamp;
    std::string original_value;
    std::string corrected_value;
    EditOrigin origin = EditOrigin::Model;

    bool operator==(const ValidationEntry&) const = default;
};

struct ValidationLog {
    std::vector<ValidationEntry> entries;

    bool empty() const { return entries.empty(); }
    bool operator==(const ValidationLog&) const = default;
};

/// Canonical angle for an ellipse orientation: the result lies in
/// [-pi/2, pi/2) and differs from `theta` by a multiple of pi.
double normalize_theta(double theta);

/// Indices of `findings` in display order: descending confidence, ties by
/// (bbox.y_min, bbox.x_min), then by id.
std::vector<std::size_t> display_order(std::span<const Finding> findings);

/// Reorders findings into display order and renumbers ids 1..n to match.
/// Returns the old id of each new position (index i -> old id of id i+1).
std::vector<int> canonicalize_display_order(AnalysisResponse& r);

// Canonical JSON (snake_case field names). Optional members are omitted when
// absent; `low_trust` is only written when set.
void to_json(nlohmann::json& j, const PixelSpacing& s);
void to_json(nlohmann::json& j, const ImageMeta& m);
void to_json(nlohmann::json& j, const Point& p);
void to_json(nlohmann::json& j, const BoundingBox& b);
void to_json(nlohmann::json& j, const Contour& c);
void to_json(nlohmann::json& j, const GaussianParams& g);
void to_json(nlohmann::json& j, const Finding& f);
void to_json(nlohmann::json& j, const AnalysisResponse& r);
void to_json(nlohmann::json& j, const ValidationEntry& e);
void to_json(nlohmann::json& j, const ValidationLog& l);

// Strict readers for the canonical form. Lenient ingestion of model output
// lives in the response parser.
void from_json(const nlohmann::json& j, PixelSpacing& s);
void from_json(const nlohmann::json& j, ImageMeta& m);
void from_json(const nlohmann::json& j, Point& p);
void from_json(const nlohmann::json& j, BoundingBox& b);
void from_json(const nlohmann::json& j, Contour& c);
void from_json(const nlohmann::json& j, GaussianParams& g);
void from_json(const nlohmann::json& j, Finding& f);
void from_json(const nlohmann::json& j, AnalysisResponse& r);
void from_json(const nlohmann::json& j, ValidationEntry& e);
void from_json(const nlohmann::json& j, ValidationLog& l);

}  // namespace gaussfind
