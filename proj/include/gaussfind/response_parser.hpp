#pragma once

#include "gaussfind/finding.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace gaussfind {

enum class ExtractionStrategy { DirectParse, FencedBlock, BalancedBraceScan, KeyValueFallback };

std::string_view to_string(ExtractionStrategy s);

struct ExtractionOutcome {
    ExtractionStrategy strategy_used = ExtractionStrategy::DirectParse;
    std::string candidate_text;
    nlohmann::json value;  // candidate_text parsed (or the salvaged object)
    std::vector<std::string> warnings;
};

/// Pulls one JSON object out of free-form model output. Strategies run in a
/// fixed order and the first that yields an object wins:
///   1. the whole trimmed text;
///   2. the first ``` fenced block (any info string);
///   3. the first balanced top-level {...} region (string-aware);
///   4. line-oriented `key: value` salvage.
/// Throws Unparseable when none applies.
ExtractionOutcome extract_structured(std::string_view raw);

struct CoercionResult {
    AnalysisResponse response;
    std::vector<std::string> warnings;
};

/// Lenient conversion of an extracted object into the domain model. `meta`
/// is authoritative for the image description. Throws SchemaViolation (with
/// `detail.paths`) when there is neither a findings array nor any finding.
CoercionResult coerce_response(const nlohmann::json& candidate, const ImageMeta& meta);

/// extract_structured followed by coerce_response; extraction warnings are
/// carried into the result.
CoercionResult parse_response(std::string_view raw, const ImageMeta& meta);

}  // namespace gaussfind
