#pragma once

#include "gaussfind/finding.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace gaussfind {

struct PromptSpec {
    ImageMeta image_meta;
    bool require_coordinates = true;
    bool require_gaussian = true;
    bool require_contours = true;
    std::string language = "en";
};

/// Complete analysis prompt. Pure: identical specs give byte-identical text.
std::string build_prompt(const PromptSpec& spec);

enum class BackendKind { Live, Replay, Scripted };

std::string_view to_string(BackendKind k);
std::optional<BackendKind> backend_kind_from_string(std::string_view s);

inline constexpr const char* kDefaultResponsePointer = "/candidates/0/content/parts/0/text";

struct BackendConfig {
    BackendKind kind = BackendKind::Replay;
    // Live
    std::optional<std::string> endpoint_url;
    std::optional<std::string> api_key_env_var;
    std::string model_name = "gemini-2.5-flash";
    std::chrono::duration<double> timeout{60.0};
    int max_retries = 3;
    std::chrono::duration<double> backoff_base{1.0};
    double backoff_factor = 2.0;
    std::string response_pointer = kDefaultResponsePointer;  // JSON pointer to the text
    // Replay
    std::optional<std::filesystem::path> fixture_dir;
    std::optional<std::string> fixture_name;  // overrides digest lookup
    // Scripted
    std::string scripted_text = "{}";
};

/// Throws InvalidParameter when required members for `kind` are missing.
void check(const BackendConfig& cfg);

struct RawResponse {
    std::string text;
    std::chrono::duration<double> latency{0.0};
    std::string backend_id;
    std::string request_digest;  // hex SHA-256 over (prompt, image bytes)
};

/// Content hash identifying one request; also the replay fixture stem.
std::string request_digest(std::string_view prompt, std::span<const std::uint8_t> image_bytes);

struct HttpRequest {
    std::string url;
    std::string bearer_token;
    std::string body;  // JSON
    std::chrono::duration<double> timeout{0.0};
};

enum class TransportStatus { Ok, Timeout, ConnectionFailed };

struct HttpResponse {
    TransportStatus status = TransportStatus::Ok;
    int http_status = 0;
    std::string body;
};

/// One HTTP round trip. Swappable so retry behaviour can be observed offline.
using Transport = std::function<HttpResponse(const HttpRequest&)>;
using Sleeper = std::function<void(std::chrono::duration<double>)>;

/// cpp-httplib based transport (http and https).
Transport default_transport();

/// Stateless per call apart from the in-flight limit shared by Live calls.
class VlmGateway {
public:
    explicit VlmGateway(Transport transport = default_transport(), Sleeper sleeper = {}, int max_in_flight = 4);
    ~VlmGateway();
    VlmGateway(const VlmGateway&) = delete;
    VlmGateway& operator=(const VlmGateway&) = delete;

    /// Errors: Timeout, AuthFailure, FixtureMissing, BackendUnavailable.
    RawResponse analyze_image(std::span<const std::uint8_t> image_bytes, const PromptSpec& spec,
                              const BackendConfig& backend);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Uses a process-wide gateway with the default transport.
RawResponse analyze_image(std::span<const std::uint8_t> image_bytes, const PromptSpec& spec,
                          const BackendConfig& backend);

}  // namespace gaussfind
