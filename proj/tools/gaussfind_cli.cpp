// gaussfind command-line front end.
//
// Exit codes: 0 success, 1 validate applied corrections, 2 typed pipeline
// failure, 64 usage error, 74 I/O error.

#include "gaussfind/error.hpp"
#include "gaussfind/geometry.hpp"
#include "gaussfind/pipeline.hpp"
#include "gaussfind/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gaussfind;

namespace {

constexpr int kExitCorrections = 1;
constexpr int kExitPipeline = 2;
constexpr int kExitUsage = 64;
constexpr int kExitIo = 74;

struct BackendFlags {
    std::string backend = "replay";
    std::string fixture;
    std::string fixture_dir;
    std::string endpoint;
    std::string api_key_env = "GEMINI_API_KEY";
    std::string model;
    double timeout = 60.0;
    int retries = 3;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
    cmd->add_option("--backend", f.backend, "Model backend")
        ->check(CLI::IsMember({"live", "replay", "scripted"}))
        ->capture_default_str();
    cmd->add_option("--fixture", f.fixture, "Replay fixture file (scripted: file whose text is returned)");
    cmd->add_option("--fixture-dir", f.fixture_dir, "Replay directory searched by request digest");
    cmd->add_option("--endpoint", f.endpoint, "Live endpoint URL (default $GAUSSFIND_LIVE_ENDPOINT)");
    cmd->add_option("--api-key-env", f.api_key_env, "Environment variable holding the API key")->capture_default_str();
    cmd->add_option("--model", f.model, "Live model name");
    cmd->add_option("--timeout", f.timeout, "Live request timeout in seconds")->capture_default_str();
    cmd->add_option("--retries", f.retries, "Live retry count")->capture_default_str();
}

BackendConfig backend_config(const BackendFlags& f) {
    BackendConfig b;
    b.kind = backend_kind_from_string(f.backend).value_or(BackendKind::Replay);
    switch (b.kind) {
        case BackendKind::Replay:
            if (!f.fixture.empty()) {
                const fs::path p(f.fixture);
                b.fixture_dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
                b.fixture_name = p.filename().string();
            } else if (!f.fixture_dir.empty()) {
                b.fixture_dir = f.fixture_dir;
            } else if (const char* d = std::getenv("GAUSSFIND_FIXTURE_DIR")) {
                b.fixture_dir = d;
            }
            break;
        case BackendKind::Live: {
            if (!f.endpoint.empty()) {
                b.endpoint_url = f.endpoint;
            } else if (const char* e = std::getenv("GAUSSFIND_LIVE_ENDPOINT")) {
                b.endpoint_url = e;
            }
            b.api_key_env_var = f.api_key_env;
            if (!f.model.empty()) b.model_name = f.model;
            b.timeout = std::chrono::duration<double>(f.timeout);
            b.max_retries = f.retries;
            break;
        }
        case BackendKind::Scripted:
            if (!f.fixture.empty()) b.scripted_text = read_text(f.fixture);
            break;
    }
    check(b);
    return b;
}

struct OptionFlags {
    bool contrast_stretch = false;
    bool median_filter = false;
    double alpha = kDefaultOverlayAlpha;
    double threshold = kDefaultHeatmapThreshold;
    std::string spacing;
};

void add_render_flags(CLI::App* cmd, OptionFlags& f) {
    cmd->add_option("--alpha", f.alpha, "Overlay opacity")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--threshold", f.threshold, "Heatmap cutoff on the normalized field")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
}

std::optional<PixelSpacing> parse_spacing(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const auto comma = s.find(',');
    try {
        if (comma == std::string::npos) throw std::invalid_argument(s);
        std::size_t used_x = 0;
        std::size_t used_y = 0;
        const std::string xs = s.substr(0, comma);
        const std::string ys = s.substr(comma + 1);
        PixelSpacing p{std::stod(xs, &used_x), std::stod(ys, &used_y)};
        if (used_x != xs.size() || used_y != ys.size()) throw std::invalid_argument(s);
        if (!(p.x_mm > 0.0 && p.y_mm > 0.0)) throw std::invalid_argument(s);
        return p;
    } catch (const std::logic_error&) {
        throw CLI::ValidationError("--spacing", "expected two positive numbers as X,Y");
    }
}

PipelineOptions pipeline_options(const OptionFlags& f) {
    PipelineOptions o;
    o.preprocess.contrast_stretch = f.contrast_stretch;
    o.preprocess.median_filter = f.median_filter;
    o.render.alpha = f.alpha;
    o.render.threshold = f.threshold;
    o.spacing = parse_spacing(f.spacing);
    return o;
}

json read_json_file(const fs::path& p) {
    const std::string text = read_text(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Unparseable, p.string() + ": " + e.what());
    }
}

std::string pretty(const json& j) { return j.dump(2, ' ', false, json::error_handler_t::replace); }

// Validated analysis plus the log accumulated so far (stored and new entries).
struct Prepared {
    AnalysisResponse analysis;
    ValidationLog stored_log;
    ValidationLog new_log;
};

Prepared prepare_analysis(const fs::path& file, const std::optional<ImageMeta>& meta) {
    LoadedAnalysis loaded = load_analysis(read_json_file(file), meta);
    AnalysisValidation v = validate_analysis(loaded.analysis);
    return {std::move(v.response), std::move(loaded.log), std::move(v.log)};
}

ValidationLog combined(const Prepared& p) {
    ValidationLog log = p.stored_log;
    log.entries.insert(log.entries.end(), p.new_log.entries.begin(), p.new_log.entries.end());
    return log;
}

HttpFrontend* g_frontend = nullptr;

void on_signal(int) {
    if (g_frontend) g_frontend->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localize findings in medical images with a vision-language model"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "gaussfind 0.1.0");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Run the full pipeline on one image");
    std::string analyze_image;
    std::string analyze_out;
    BackendFlags analyze_backend;
    OptionFlags analyze_opts;
    analyze->add_option("image", analyze_image, "Input image (PNG, JPEG, TIFF)")->required()->check(CLI::ExistingFile);
    analyze->add_option("--out", analyze_out, "Output directory")->required();
    add_backend_flags(analyze, analyze_backend);
    add_render_flags(analyze, analyze_opts);
    analyze->add_flag("--contrast-stretch", analyze_opts.contrast_stretch, "Percentile contrast stretch before analysis");
    analyze->add_flag("--median-filter", analyze_opts.median_filter, "3x3 median filter before analysis");
    analyze->add_option("--spacing", analyze_opts.spacing, "Pixel spacing in mm as X,Y");

    // validate
    auto* validate = app.add_subcommand("validate", "Run the geometry checks on an analysis document");
    std::string validate_file;
    int validate_w = 0;
    int validate_h = 0;
    std::string validate_write;
    validate->add_option("analysis", validate_file, "analysis.json")->required()->check(CLI::ExistingFile);
    validate->add_option("--width", validate_w, "Image width in pixels")->required()->check(CLI::PositiveNumber);
    validate->add_option("--height", validate_h, "Image height in pixels")->required()->check(CLI::PositiveNumber);
    validate->add_option("--write", validate_write, "Also write the corrected analysis here");

    // render
    auto* render = app.add_subcommand("render", "Render sketch, overlay, heatmap and composite layers");
    std::string render_file;
    std::string render_image;
    std::string render_out;
    OptionFlags render_opts;
    render->add_option("analysis", render_file, "analysis.json")->required()->check(CLI::ExistingFile);
    render->add_option("image", render_image, "Image the analysis refers to")->required()->check(CLI::ExistingFile);
    render->add_option("--out", render_out, "Output directory")->required();
    add_render_flags(render, render_opts);

    // report
    auto* report = app.add_subcommand("report", "Build a clinical report and print it");
    std::string report_file;
    std::string report_spacing;
    std::string report_format = "md";
    report->add_option("analysis", report_file, "analysis.json")->required()->check(CLI::ExistingFile);
    report->add_option("--spacing", report_spacing, "Pixel spacing in mm as X,Y");
    report->add_option("--format", report_format, "Output format")
        ->check(CLI::IsMember({"json", "md", "markdown", "html"}))
        ->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "Start the HTTP analysis service");
    std::string serve_addr = "127.0.0.1:8080";
    serve->add_option("--addr", serve_addr, "Listen address host:port")->capture_default_str();

    // fixture record
    auto* fixture = app.add_subcommand("fixture", "Replay fixture tools");
    fixture->require_subcommand(1);
    auto* record = fixture->add_subcommand("record", "Capture a raw model response as a replay fixture");
    std::string record_image;
    std::string record_out;
    BackendFlags record_backend;
    record_backend.backend = "live";
    OptionFlags record_opts;
    record->add_option("image", record_image, "Input image")->required()->check(CLI::ExistingFile);
    record->add_option("--out", record_out, "Fixture file to write")->required();
    add_backend_flags(record, record_backend);
    record->add_flag("--contrast-stretch", record_opts.contrast_stretch, "Percentile contrast stretch");
    record->add_flag("--median-filter", record_opts.median_filter, "3x3 median filter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*analyze) {
            const PipelineOptions opts = pipeline_options(analyze_opts);
            const BackendConfig backend = backend_config(analyze_backend);
            const auto bytes = read_bytes(analyze_image);
            const LoadedImage img = prepare_image(bytes, fs::path(analyze_image).filename().string(), opts);
            VlmGateway gateway;
            const auto result = run_pipeline(img, backend, opts, analyze_out, gateway, [](Stage s) {
                std::cerr << "stage: " << to_string(s) << "\n";
            });
            std::cout << pretty({{"state", "Complete"},
                                 {"out", analyze_out},
                                 {"findings", result.analysis.findings.size()},
                                 {"corrections", result.log.entries.size()},
                                 {"backend_id", result.raw.backend_id}})
                      << "\n";
            return 0;
        }
        if (*validate) {
            ImageMeta meta;
            const json doc = read_json_file(validate_file);
            if (auto it = doc.find("image"); it != doc.end() && it->is_object()) {
                meta.modality = modality_from_string(it->value("modality", std::string()));
                meta.source_name = it->value("source_name", std::string());
            }
            meta.width = validate_w;
            meta.height = validate_h;
            const Prepared p = prepare_analysis(validate_file, meta);
            std::cout << pretty(json(p.new_log)) << "\n";
            if (!validate_write.empty()) {
                write_atomic(validate_write, pretty(analysis_document(p.analysis, combined(p))) + "\n");
            }
            return p.new_log.empty() ? 0 : kExitCorrections;
        }
        if (*render) {
            const LoadedImage img = load_image(read_bytes(render_image), fs::path(render_image).filename().string());
            const json doc = read_json_file(render_file);
            ImageMeta meta = img.meta;
            if (auto it = doc.find("image"); it != doc.end() && it->is_object()) {
                const int w = it->value("width", img.meta.width);
                const int h = it->value("height", img.meta.height);
                if (w != img.meta.width || h != img.meta.height) {
                    throw Error(ErrorCode::DimensionMismatch,
                                "analysis describes a " + std::to_string(w) + "x" + std::to_string(h) + " image, got " +
                                    std::to_string(img.meta.width) + "x" + std::to_string(img.meta.height));
                }
            }
            const Prepared p = prepare_analysis(render_file, meta);
            const RenderSet layers = render_all(img.image, p.analysis, pipeline_options(render_opts).render);
            fs::create_directories(render_out);
            const fs::path out(render_out);
            write_atomic(out / files::kSketch, encode_png(layers.sketch));
            write_atomic(out / files::kOverlay, encode_png(layers.overlay));
            write_atomic(out / files::kHeatmap, encode_png(layers.heatmap));
            write_atomic(out / files::kComposite, encode_png(layers.composite));
            return 0;
        }
        if (*report) {
            const auto spacing = parse_spacing(report_spacing);
            const Prepared p = prepare_analysis(report_file, std::nullopt);
            const auto format = report_format_from_string(report_format);
            const ClinicalReport r = build_report(p.analysis, combined(p), spacing);
            std::cout << export_report(r, format.value_or(ReportFormat::Markdown));
            return 0;
        }
        if (*serve) {
            const auto colon = serve_addr.rfind(':');
            int port = -1;
            try {
                if (colon != std::string::npos) port = std::stoi(serve_addr.substr(colon + 1));
            } catch (const std::logic_error&) {
            }
            if (port < 0 || port > 65535) {
                std::cerr << "--addr must be host:port\n";
                return kExitUsage;
            }
            const std::string host = serve_addr.substr(0, colon);
            AnalysisService service(service_config_from_env());
            HttpFrontend frontend(service);
            const int bound = frontend.bind(host, port);
            if (bound < 0) {
                std::cerr << "cannot listen on " << serve_addr << "\n";
                return kExitIo;
            }
            g_frontend = &frontend;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << host << ":" << bound << " (sessions in "
                      << service.config().sessions_dir.string() << ")\n";
            frontend.listen();
            g_frontend = nullptr;
            return 0;
        }
        if (*record) {
            const PipelineOptions opts = pipeline_options(record_opts);
            const BackendConfig backend = backend_config(record_backend);
            const LoadedImage img =
                prepare_image(read_bytes(record_image), fs::path(record_image).filename().string(), opts);
            PromptSpec spec;
            spec.image_meta = img.meta;
            const RawResponse raw = gaussfind::analyze_image(encode_png(img.image), spec, backend);
            write_atomic(record_out, raw.text);
            std::cout << pretty({{"out", record_out},
                                 {"request_digest", raw.request_digest},
                                 {"backend_id", raw.backend_id},
                                 {"latency_s", raw.latency.count()}})
                      << "\n";
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << pretty(json{{"error", e.to_json()}}) << "\n";
        return e.code() == ErrorCode::IoError ? kExitIo : kExitPipeline;
    } catch (const fs::filesystem_error& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
