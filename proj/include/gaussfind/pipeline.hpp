#pragma once

// End-to-end composition of the library stages. The CLI and the HTTP service
// are both thin layers over these functions.

#include "gaussfind/finding.hpp"
#include "gaussfind/ingest.hpp"
#include "gaussfind/render.hpp"
#include "gaussfind/report.hpp"
#include "gaussfind/vlm_gateway.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gaussfind {

namespace files {
inline constexpr const char* kOriginal = "original.png";
inline constexpr const char* kRaw = "raw.txt";
inline constexpr const char* kAnalysis = "analysis.json";
inline constexpr const char* kValidation = "validation.json";
inline constexpr const char* kSketch = "sketch.png";
inline constexpr const char* kOverlay = "overlay.png";
inline constexpr const char* kHeatmap = "heatmap.png";
inline constexpr const char* kComposite = "composite.png";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportMd = "report.md";
inline constexpr const char* kReportHtml = "report.html";
inline constexpr const char* kState = "state.json";

/// Everything a completed analysis directory holds (state.json excluded).
inline constexpr std::array<const char*, 11> kLayout{kOriginal, kRaw,     kAnalysis,   kValidation,
                                                     kSketch,    kOverlay, kHeatmap,    kComposite,
                                                     kReportJson, kReportMd, kReportHtml};
}  // namespace files

enum class Stage { Prompting, Parsing, Validating, Rendering, Reporting };

std::string_view to_string(Stage s);

struct PipelineOptions {
    PreprocessOptions preprocess;
    RenderOptions render;
    std::optional<PixelSpacing> spacing;
    bool require_gaussian = true;
    bool require_contours = true;
    std::string language = "en";
};

nlohmann::json to_json(const PipelineOptions& o);
PipelineOptions pipeline_options_from_json(const nlohmann::json& j);

using ProgressFn = std::function<void(Stage)>;

struct PipelineResult {
    RawResponse raw;
    AnalysisResponse analysis;
    ValidationLog log;
    std::vector<std::string> warnings;
    ClinicalReport report;
};

/// Decodes and preprocesses an upload; returns the image the model sees and
/// its metadata (spacing from `opts` applied).
LoadedImage prepare_image(std::span<const std::uint8_t> bytes, std::string_view name_hint,
                          const PipelineOptions& opts);

/// prompting -> parsing -> validating -> rendering -> reporting, writing the
/// full layout into `out_dir`. original.png and raw.txt are written before
/// any stage that can fail on model output, so they survive failures.
PipelineResult run_pipeline(const LoadedImage& image, const BackendConfig& backend, const PipelineOptions& opts,
                            const std::filesystem::path& out_dir, VlmGateway& gateway,
                            const ProgressFn& progress = {}, const ReportContext& report_ctx = {});

/// Rewrites analysis.json, validation.json, the four PNGs and the three
/// report files from an already validated analysis.
ClinicalReport write_artifacts(const RasterImage& original, const AnalysisResponse& analysis, const ValidationLog& log,
                               const PipelineOptions& opts, const std::filesystem::path& out_dir,
                               const ReportContext& report_ctx = {}, const std::vector<std::string>& warnings = {});

/// analysis.json document: canonical analysis plus `validation_log`.
nlohmann::json analysis_document(const AnalysisResponse& analysis, const ValidationLog& log,
                                 const std::vector<std::string>& warnings = {});

struct LoadedAnalysis {
    AnalysisResponse analysis;
    ValidationLog log;
};

/// Reads an analysis.json document. `meta_override` replaces the embedded
/// image description (e.g. dimensions given on the command line).
LoadedAnalysis load_analysis(const nlohmann::json& doc, const std::optional<ImageMeta>& meta_override = std::nullopt);

// Small file helpers with typed IoError failures.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p);
std::string read_text(const std::filesystem::path& p);
/// Write-to-temp then rename, so readers never observe a partial file.
void write_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> bytes);
void write_atomic(const std::filesystem::path& p, std::string_view text);

}  // namespace gaussfind
