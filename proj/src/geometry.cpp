#include "gaussfind/geometry.hpp"

#include "gaussfind/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace gaussfind {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string describe(const BoundingBox& b) {
    return "(" + num(b.x_min) + ", " + num(b.y_min) + ", " + num(b.x_max) + ", " + num(b.y_max) + ")";
}

std::string describe(const Point& p) { return "(" + num(p.x) + ", " + num(p.y) + ")"; }

std::string describe(const GaussianParams& g) {
    return "mu=(" + num(g.mu_x) + ", " + num(g.mu_y) + ") sigma=(" + num(g.sigma_x) + ", " + num(g.sigma_y) +
           ") theta=" + num(g.theta);
}

double clamp_sigma(double s, double hi) {
    if (!(s >= kMinSigma)) return kMinSigma;  // also catches NaN
    return std::min(s, hi);
}

class Recorder {
public:
    Recorder(int id, EditOrigin origin) : id_(id), origin_(origin) {}

    void add(CheckName check, std::string original, std::string corrected) {
        entries_.push_back({id_, check, std::move(original), std::move(corrected), origin_});
    }

    template <typename T>
    void clamp_field(const char* name, T& value, T clamped) {
        if (value != clamped) {
            add(CheckName::BoundaryClamp, std::string(name) + "=" + num(value),
                std::string(name) + "=" + num(clamped));
            value = clamped;
        }
    }

    std::vector<ValidationEntry>& entries() { return entries_; }

private:
    int id_;
    EditOrigin origin_;
    std::vector<ValidationEntry> entries_;
};

}  // namespace

double clamp_coordinate(double raw, int extent) {
    if (extent < 1) throw Error(ErrorCode::InvalidParameter, "extent must be >= 1");
    return std::max(0.0, std::min(static_cast<double>(extent - 1), raw));
}

FindingValidation validate_finding(const Finding& input, const ImageMeta& meta, EditOrigin origin) {
    check(meta);
    Finding f = input;
    Recorder log(f.id, origin);

    // (a) bounding box inside the image, corners ordered
    BoundingBox& b = f.bbox;
    log.clamp_field("x_min", b.x_min, clamp_coordinate(b.x_min, meta.width));
    log.clamp_field("x_max", b.x_max, clamp_coordinate(b.x_max, meta.width));
    log.clamp_field("y_min", b.y_min, clamp_coordinate(b.y_min, meta.height));
    log.clamp_field("y_max", b.y_max, clamp_coordinate(b.y_max, meta.height));
    if (b.x_min > b.x_max || b.y_min > b.y_max) {
        const std::string before = describe(b);
        if (b.x_min > b.x_max) std::swap(b.x_min, b.x_max);
        if (b.y_min > b.y_max) std::swap(b.y_min, b.y_max);
        log.add(CheckName::BoundaryClamp, "bbox=" + before, "bbox=" + describe(b));
    }
    if (b.width() <= 0.0 || b.height() <= 0.0) {
        nlohmann::json detail = log.entries();
        throw Error(ErrorCode::DegenerateFinding,
                    "finding " + std::to_string(f.id) + " has a zero-area bounding box " + describe(b), detail);
    }

    // (b) center inside the image, then inside the bbox
    log.clamp_field("center.x", f.center.x, clamp_coordinate(f.center.x, meta.width));
    log.clamp_field("center.y", f.center.y, clamp_coordinate(f.center.y, meta.height));
    if (!b.contains(f.center)) {
        const Point repaired{std::clamp(f.center.x, b.x_min, b.x_max), std::clamp(f.center.y, b.y_min, b.y_max)};
        log.add(CheckName::CenterRepair, "center=" + describe(f.center), "center=" + describe(repaired));
        f.center = repaired;
    }

    // (c) contour: clamp, drop repeated vertices, require a closable polygon
    if (f.contour) {
        auto& pts = f.contour->points;
        int clamped = 0;
        for (auto& p : pts) {
            const Point q{clamp_coordinate(p.x, meta.width), clamp_coordinate(p.y, meta.height)};
            if (q != p) {
                ++clamped;
                p = q;
            }
        }
        if (clamped > 0) {
            log.add(CheckName::BoundaryClamp, "contour: " + std::to_string(clamped) + " point(s) outside image",
                    "contour: clamped to image bounds");
        }
        const std::size_t before = pts.size();
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        while (pts.size() > 1 && pts.back() == pts.front()) pts.pop_back();
        if (pts.size() != before) {
            log.add(CheckName::ContourClosure, "contour: " + std::to_string(before) + " points",
                    "contour: " + std::to_string(pts.size()) + " points (duplicates removed)");
        }
        if (pts.size() < 3) {
            log.add(CheckName::ContourClosure, "contour: " + std::to_string(pts.size()) + " points",
                    "contour dropped (fewer than 3 distinct points)");
            f.contour.reset();
        }
    }

    // (d) Gaussian parameters in range, synthesized from the bbox if absent
    const double sigma_max = static_cast<double>(std::max(meta.width, meta.height));
    if (!f.gaussian) {
        GaussianParams g;
        const Point mid = b.midpoint();
        g.mu_x = mid.x;
        g.mu_y = mid.y;
        g.sigma_x = clamp_sigma(b.width() / 4.0, sigma_max);
        g.sigma_y = clamp_sigma(b.height() / 4.0, sigma_max);
        g.theta = 0.0;
        log.add(CheckName::GaussianRange, "gaussian absent", "synthesized from bbox: " + describe(g));
        f.gaussian = g;
    } else {
        GaussianParams g = *f.gaussian;
        const std::string before = describe(g);
        g.mu_x = std::isfinite(g.mu_x) ? clamp_coordinate(g.mu_x, meta.width) : f.center.x;
        g.mu_y = std::isfinite(g.mu_y) ? clamp_coordinate(g.mu_y, meta.height) : f.center.y;
        g.sigma_x = clamp_sigma(g.sigma_x, sigma_max);
        g.sigma_y = clamp_sigma(g.sigma_y, sigma_max);
        g.theta = std::isfinite(g.theta) ? normalize_theta(g.theta) : 0.0;
        if (g != *f.gaussian) {
            log.add(CheckName::GaussianRange, before, describe(g));
            f.gaussian = g;
        }
    }

    return {std::move(f), std::move(log.entries())};
}

AnalysisValidation validate_analysis(const AnalysisResponse& r) {
    check(r.image);
    AnalysisValidation out;
    out.response = r;
    out.response.findings.clear();

    for (const Finding& f : r.findings) {
        try {
            auto v = validate_finding(f, r.image);
            const int new_id = static_cast<int>(out.response.findings.size()) + 1;
            v.finding.id = new_id;
            for (auto& e : v.entries) {
                e.finding_id = new_id;
                out.log.entries.push_back(std::move(e));
            }
            out.response.findings.push_back(std::move(v.finding));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateFinding) throw;
            for (const auto& j : e.detail()) out.log.entries.push_back(j.get<ValidationEntry>());
            out.log.entries.push_back({f.id, CheckName::BoundaryClamp, "bbox=" + describe(f.bbox),
                                       "excluded: degenerate bounding box", EditOrigin::Model});
        }
    }
    return out;
}

}  // namespace gaussfind
