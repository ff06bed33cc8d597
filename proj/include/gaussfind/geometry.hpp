#pragma once

#include "gaussfind/finding.hpp"

#include <vector>

namespace gaussfind {

/// Smallest and largest standard deviation (pixels) a validated Gaussian may
/// carry: [0.5, max(W, H)].
inline constexpr double kMinSigma = 0.5;

/// max(0, min(extent - 1, raw)). `extent` must be >= 1.
double clamp_coordinate(double raw, int extent);

struct FindingValidation {
    Finding finding;
    std::vector<ValidationEntry> entries;
};

/// Applies, in order: bbox clamp + reorder, center clamp + repair into the
/// bbox, contour clamp/dedupe/closure, and Gaussian range checks (or
/// synthesis from the bbox when absent). Every change is logged once.
///
/// Throws DegenerateFinding when the clamped bbox has zero area; the error
/// detail carries the entries logged up to that point.
FindingValidation validate_finding(const Finding& f, const ImageMeta& meta,
                                   EditOrigin origin = EditOrigin::Model);

struct AnalysisValidation {
    AnalysisResponse response;
    ValidationLog log;
};

/// Validates every finding, drops degenerate ones (logged) and renumbers the
/// survivors 1..n in their original order.
AnalysisValidation validate_analysis(const AnalysisResponse& r);

}  // namespace gaussfind
