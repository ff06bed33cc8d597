#include "gaussfind/vlm_gateway.hpp"

#include "gaussfind/digest.hpp"
#include "gaussfind/error.hpp"
#include "gaussfind/ingest.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace gaussfind {

using nlohmann::json;

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Live: return "live";
        case BackendKind::Replay: return "replay";
        case BackendKind::Scripted: return "scripted";
    }
    return "replay";
}

std::optional<BackendKind> backend_kind_from_string(std::string_view s) {
    if (s == "live") return BackendKind::Live;
    if (s == "replay") return BackendKind::Replay;
    if (s == "scripted") return BackendKind::Scripted;
    return std::nullopt;
}

void check(const BackendConfig& cfg) {
    switch (cfg.kind) {
        case BackendKind::Live:
            if (!cfg.endpoint_url || cfg.endpoint_url->empty()) {
                throw Error(ErrorCode::InvalidParameter, "live backend requires endpoint_url");
            }
            if (!cfg.api_key_env_var || cfg.api_key_env_var->empty()) {
                throw Error(ErrorCode::InvalidParameter, "live backend requires api_key_env_var");
            }
            if (cfg.max_retries < 0) throw Error(ErrorCode::InvalidParameter, "max_retries must be >= 0");
            break;
        case BackendKind::Replay:
            if (!cfg.fixture_dir) throw Error(ErrorCode::InvalidParameter, "replay backend requires fixture_dir");
            break;
        case BackendKind::Scripted: break;
    }
}

std::string build_prompt(const PromptSpec& spec) {
    check(spec.image_meta);
    const int w = spec.image_meta.width;
    const int h = spec.image_meta.height;
    const std::string dims = std::to_string(w) + "x" + std::to_string(h) + " pixels";
    std::ostringstream p;

    p << "You are an expert radiologist assisting with medical image analysis.\n"
      << "Analyze the attached medical image and report every abnormality you can identify.\n\n";

    p << "IMAGE SPECIFICATIONS\n"
      << "- Image dimensions: " << dims << " (width " << w << ", height " << h << ").\n";
    if (spec.image_meta.modality != Modality::Unknown) {
        p << "- Expected modality: " << to_string(spec.image_meta.modality) << ".\n";
    }
    p << "\n";

    p << "ANATOMICAL CONTEXT\n"
      << "- Identify the examination type (for example CT, MRI, X-ray, ultrasound) and the anatomical region shown.\n"
      << "- For each finding, describe its location relative to surrounding anatomical structures, the image\n"
      << "  orientation and the regional boundaries it lies within.\n\n";

    if (spec.require_coordinates) {
        p << "COORDINATE SYSTEM\n"
          << "- Origin (0, 0) is the top-left corner of the image; x increases to the right, y increases downward.\n"
          << "- Coordinates are integer pixel positions: x in [0, " << (w - 1) << "], y in [0, " << (h - 1) << "].\n"
          << "- Every coordinate must lie inside the image. The center must lie inside its bounding box.\n\n";
    }

    if (spec.require_gaussian) {
        p << "STATISTICAL PARAMETERS\n"
          << "Model each finding as a two-dimensional Gaussian distribution:\n"
          << "- mu_x (μx): x coordinate of the distribution mean in pixels (the finding center).\n"
          << "- mu_y (μy): y coordinate of the distribution mean in pixels.\n"
          << "- sigma_x (σx): standard deviation along x in pixels; about one quarter of the finding width.\n"
          << "- sigma_y (σy): standard deviation along y in pixels; about one quarter of the finding height.\n"
          << "- theta (θ): rotation angle of the finding's main axis in radians, measured from the x axis.\n\n";
    }

    p << "CLINICAL SIGNIFICANCE\n"
      << "- Rate your confidence in each finding with an integer confidence score from 1 (very uncertain) to 10\n"
      << "  (certain).\n"
      << "- State the clinical significance of each finding and whether further work-up is warranted.\n"
      << "- Write all narrative text in language: " << spec.language << ".\n\n";

    p << "OUTPUT FORMAT\n"
      << "Reply with a single JSON object and nothing else, using exactly this schema:\n"
      << "{\n"
      << "  \"examination_type\": \"string\",\n"
      << "  \"anatomical_region\": \"string\",\n"
      << "  \"findings\": [\n"
      << "    {\n"
      << "      \"id\": 1,\n"
      << "      \"label\": \"short name of the finding\",\n"
      << "      \"description\": \"location and appearance\",\n";
    if (spec.require_coordinates) {
        p << "      \"bbox\": {\"x_min\": 0, \"y_min\": 0, \"x_max\": 0, \"y_max\": 0},\n"
          << "      \"center\": {\"x\": 0, \"y\": 0},\n";
        if (spec.require_contours) {
            p << "      \"contour\": [{\"x\": 0, \"y\": 0}, {\"x\": 0, \"y\": 0}, {\"x\": 0, \"y\": 0}],\n";
        }
    }
    if (spec.require_gaussian) {
        p << "      \"gaussian\": {\"mu_x\": 0, \"mu_y\": 0, \"sigma_x\": 0, \"sigma_y\": 0, \"theta\": 0},\n";
    }
    p << "      \"confidence\": 1,\n"
      << "      \"clinical_significance\": \"string\"\n"
      << "    }\n"
      << "  ],\n"
      << "  \"overall_impression\": \"string\"\n"
      << "}\n";
    if (spec.require_contours && spec.require_coordinates) {
        p << "The contour lists boundary points of the finding in order around its outline (at least 3 points).\n";
    }
    p << "If there are no abnormalities, return an empty findings array.\n";
    return p.str();
}

std::string request_digest(std::string_view prompt, std::span<const std::uint8_t> image_bytes) {
    std::array<std::uint8_t, 8> len{};
    for (std::size_t i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(prompt.size()) >> (8 * i));
    const std::span<const std::uint8_t> parts[] = {len, as_bytes(prompt), image_bytes};
    return sha256_hex(parts);
}

// ---------------------------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidParameter, "endpoint_url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

const char* mime_type(std::span<const std::uint8_t> bytes) {
    switch (sniff_format(bytes)) {
        case ImageFormat::PNG: return "image/png";
        case ImageFormat::JPEG: return "image/jpeg";
        case ImageFormat::TIFF: return "image/tiff";
        case ImageFormat::Unknown: break;
    }
    return "application/octet-stream";
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::FixtureMissing, "replay fixture not found: " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

Transport default_transport() {
    return [](const HttpRequest& req) {
        const auto url = split_url(req.url);
        httplib::Client client(url.scheme_host_port);
        const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout);
        client.set_connection_timeout(secs);
        client.set_read_timeout(secs);
        client.set_write_timeout(secs);
        httplib::Headers headers;
        if (!req.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + req.bearer_token);
        auto res = client.Post(url.path, headers, req.body, "application/json");
        HttpResponse out;
        if (!res) {
            const auto err = res.error();
            out.status = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                          err == httplib::Error::Write)
                             ? TransportStatus::Timeout
                             : TransportStatus::ConnectionFailed;
            return out;
        }
        out.http_status = res->status;
        out.body = res->body;
        return out;
    };
}

struct VlmGateway::Impl {
    Transport transport;
    Sleeper sleeper;
    int max_in_flight;
    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;

    class Slot {
    public:
        explicit Slot(Impl& impl) : impl_(impl) {
            std::unique_lock lock(impl_.mu);
            impl_.cv.wait(lock, [&] { return impl_.in_flight < impl_.max_in_flight; });
            ++impl_.in_flight;
        }
        ~Slot() {
            {
                std::lock_guard lock(impl_.mu);
                --impl_.in_flight;
            }
            impl_.cv.notify_one();
        }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        Impl& impl_;
    };

    std::string live(std::span<const std::uint8_t> image, const std::string& prompt, const BackendConfig& cfg);
};

std::string VlmGateway::Impl::live(std::span<const std::uint8_t> image, const std::string& prompt,
                                   const BackendConfig& cfg) {
    const char* key = std::getenv(cfg.api_key_env_var->c_str());
    if (!key || !*key) {
        throw Error(ErrorCode::AuthFailure, "environment variable " + *cfg.api_key_env_var + " is not set");
    }

    const json body = {
        {"model", cfg.model_name},
        {"contents",
         json::array({{{"role", "user"},
                       {"parts", json::array({{{"text", prompt}},
                                              {{"inline_data", {{"mime_type", mime_type(image)},
                                                                {"data", base64_encode(image)}}}}})}}})},
        {"generationConfig", {{"temperature", 0.0}}},
    };
    HttpRequest req{*cfg.endpoint_url, key, body.dump(), cfg.timeout};

    TransportStatus last = TransportStatus::ConnectionFailed;
    std::string last_detail;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = cfg.backoff_base * std::pow(cfg.backoff_factor, attempt - 1);
            if (sleeper) sleeper(delay);
            else std::this_thread::sleep_for(delay);
        }
        HttpResponse res;
        {
            Slot slot(*this);
            res = transport(req);
        }
        last = res.status;
        if (res.status != TransportStatus::Ok) {
            last_detail = res.status == TransportStatus::Timeout ? "timed out" : "connection failed";
            continue;
        }
        if (res.http_status == 401 || res.http_status == 403) {
            throw Error(ErrorCode::AuthFailure, "backend rejected the API key (HTTP " + std::to_string(res.http_status) + ")");
        }
        if (res.http_status == 429 || res.http_status >= 500) {
            last_detail = "HTTP " + std::to_string(res.http_status);
            continue;
        }
        if (res.http_status != 200) {
            throw Error(ErrorCode::BackendUnavailable, "backend answered HTTP " + std::to_string(res.http_status));
        }
        const json parsed = json::parse(res.body, nullptr, false);
        if (parsed.is_discarded()) throw Error(ErrorCode::BackendUnavailable, "backend response is not JSON");
        const json::json_pointer ptr(cfg.response_pointer);
        if (!parsed.contains(ptr) || !parsed.at(ptr).is_string()) {
            throw Error(ErrorCode::BackendUnavailable, "backend response has no text at " + cfg.response_pointer);
        }
        std::string text = parsed.at(ptr).get<std::string>();
        if (text.empty()) throw Error(ErrorCode::BackendUnavailable, "backend returned empty text");
        return text;
    }
    const json detail = {{"attempts", cfg.max_retries + 1}};
    if (last == TransportStatus::Timeout) {
        throw Error(ErrorCode::Timeout, "backend timed out after " + std::to_string(cfg.max_retries + 1) + " attempt(s)",
                    detail);
    }
    throw Error(ErrorCode::BackendUnavailable,
                "backend unavailable after " + std::to_string(cfg.max_retries + 1) + " attempt(s): " + last_detail, detail);
}

VlmGateway::VlmGateway(Transport transport, Sleeper sleeper, int max_in_flight)
    : impl_(std::make_unique<Impl>()) {
    impl_->transport = std::move(transport);
    impl_->sleeper = std::move(sleeper);
    impl_->max_in_flight = std::max(1, max_in_flight);
}

VlmGateway::~VlmGateway() = default;

RawResponse VlmGateway::analyze_image(std::span<const std::uint8_t> image_bytes, const PromptSpec& spec,
                                      const BackendConfig& backend) {
    check(backend);
    if (image_bytes.empty()) throw Error(ErrorCode::EmptyInput, "image data is empty");
    const auto start = std::chrono::steady_clock::now();
    const std::string prompt = build_prompt(spec);

    RawResponse out;
    out.request_digest = request_digest(prompt, image_bytes);
    switch (backend.kind) {
        case BackendKind::Scripted:
            out.text = backend.scripted_text;
            out.backend_id = "scripted";
            break;
        case BackendKind::Replay: {
            const std::string name = backend.fixture_name.value_or(out.request_digest + ".txt");
            const auto path = *backend.fixture_dir / name;
            if (!std::filesystem::is_regular_file(path)) {
                throw Error(ErrorCode::FixtureMissing, "replay fixture not found: " + path.string(),
                            {{"path", path.string()}, {"request_digest", out.request_digest}});
            }
            out.text = read_file(path);
            out.backend_id = "replay:" + path.filename().string();
            break;
        }
        case BackendKind::Live:
            out.text = impl_->live(image_bytes, prompt, backend);
            out.backend_id = "live:" + backend.model_name;
            break;
    }
    out.latency = std::chrono::steady_clock::now() - start;
    return out;
}

RawResponse analyze_image(std::span<const std::uint8_t> image_bytes, const PromptSpec& spec,
                          const BackendConfig& backend) {
    static VlmGateway gateway;
    return gateway.analyze_image(image_bytes, spec, backend);
}

}  // namespace gaussfind
