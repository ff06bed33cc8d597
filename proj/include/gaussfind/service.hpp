#pragma once

// Session-oriented analysis service. Each session lives in its own directory
// (see files::kLayout plus state.json); the HTTP front end in HttpFrontend is a
// thin mapping of routes onto AnalysisService calls.

#include "gaussfind/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gaussfind {

enum class SessionState { Created, Running, Complete, Failed };

std::string_view to_string(SessionState s);
std::optional<SessionState> session_state_from_string(std::string_view s);

inline constexpr std::size_t kDefaultMaxUploadBytes = 32u * 1024u * 1024u;

struct ServiceConfig {
    std::filesystem::path sessions_dir = "sessions";
    std::size_t max_upload_bytes = kDefaultMaxUploadBytes;
    // Templates for ?backend= selection. Replay and live requests fill in the
    // fixture name or nothing; their other members come from here.
    BackendConfig replay;
    BackendConfig live;
    Clock clock;
};

/// Defaults overridden by GAUSSFIND_SESSIONS_DIR, GAUSSFIND_MAX_UPLOAD_BYTES,
/// GAUSSFIND_FIXTURE_DIR, GAUSSFIND_LIVE_ENDPOINT, GAUSSFIND_API_KEY_VAR and
/// GAUSSFIND_MODEL.
ServiceConfig service_config_from_env();

struct SessionInfo {
    std::string id;
    SessionState state = SessionState::Created;
    std::optional<Stage> stage;
    nlohmann::json error;  // typed error record when Failed
    std::string source_name;
    std::string backend_id;
    std::string created_at;
    std::string updated_at;
    PipelineOptions options;
};

nlohmann::json to_json(const SessionInfo& s);

struct Artifact {
    std::vector<std::uint8_t> bytes;
    std::string content_type;
};

struct EditResult {
    Finding finding;
    std::vector<ValidationEntry> entries;   // appended by this edit
    std::map<std::string, std::string> artifact_hashes;  // kind -> sha256
};

nlohmann::json to_json(const EditResult& r);

/// Artifact kinds accepted by get_artifact, mapped to file names.
const std::map<std::string, std::string>& artifact_kinds();

class AnalysisService {
public:
    explicit AnalysisService(ServiceConfig cfg, Transport transport = default_transport(), Sleeper sleeper = {});
    ~AnalysisService();
    AnalysisService(const AnalysisService&) = delete;
    AnalysisService& operator=(const AnalysisService&) = delete;

    const ServiceConfig& config() const { return cfg_; }

    /// Validates the image and creates a session in Created.
    /// Errors: EmptyInput, UnsupportedFormat, CorruptImage, PayloadTooLarge.
    std::string create_analysis(std::span<const std::uint8_t> bytes, std::string_view name_hint,
                                const PipelineOptions& opts = {});

    /// Starts the pipeline on a worker thread and returns the Running state.
    /// Conflict unless the session is Created.
    SessionInfo run_analysis(const std::string& id, const BackendConfig& backend);

    /// Blocks until the session leaves Running or `timeout` elapses.
    SessionInfo wait(const std::string& id, std::chrono::milliseconds timeout = std::chrono::seconds(30));

    SessionInfo get(const std::string& id) const;
    std::vector<SessionInfo> list() const;

    /// NotFound for unknown id or kind; Conflict unless Complete (raw.txt is
    /// also served for Failed sessions).
    Artifact get_artifact(const std::string& id, const std::string& kind) const;

    /// Merges {center?, bbox?, gaussian?} into one finding, re-validates it as
    /// a human edit and regenerates every artifact.
    EditResult patch_finding(const std::string& id, int finding_id, const nlohmann::json& edit);
    EditResult add_finding(const std::string& id, const nlohmann::json& finding);
    /// Returns the artifact hashes after regeneration.
    std::map<std::string, std::string> delete_finding(const std::string& id, int finding_id);

    /// Current analysis.json document of a Complete session.
    nlohmann::json analysis(const std::string& id) const;

    /// BackendConfig for a ?backend= selector (live, replay, scripted).
    BackendConfig backend_for(std::string_view selector, const std::optional<std::string>& fixture,
                              const std::optional<std::string>& scripted_text) const;

private:
    struct Session;

    std::shared_ptr<Session> find(const std::string& id) const;
    std::filesystem::path dir_of(const std::string& id) const;
    void persist(const Session& s) const;
    void execute(std::shared_ptr<Session> s, BackendConfig backend);
    std::map<std::string, std::string> regenerate(Session& s, const AnalysisResponse& analysis,
                                                  const ValidationLog& log);
    std::string now() const;

    ServiceConfig cfg_;
    std::unique_ptr<VlmGateway> gateway_;
    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP binding of AnalysisService.
class HttpFrontend {
public:
    explicit HttpFrontend(AnalysisService& service);
    ~HttpFrontend();
    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace gaussfind
