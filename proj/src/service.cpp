#include "gaussfind/service.hpp"

#include "gaussfind/digest.hpp"
#include "gaussfind/error.hpp"
#include "gaussfind/geometry.hpp"
#include "gaussfind/response_parser.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <condition_variable>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace gaussfind {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(SessionState s) {
    switch (s) {
        case SessionState::Created: return "Created";
        case SessionState::Running: return "Running";
        case SessionState::Complete: return "Complete";
        case SessionState::Failed: return "Failed";
    }
    return "Created";
}

std::optional<SessionState> session_state_from_string(std::string_view s) {
    for (auto st : {SessionState::Created, SessionState::Running, SessionState::Complete, SessionState::Failed}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

static std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

ServiceConfig service_config_from_env() {
    ServiceConfig cfg;
    if (auto v = env("GAUSSFIND_SESSIONS_DIR")) cfg.sessions_dir = *v;
    if (auto v = env("GAUSSFIND_MAX_UPLOAD_BYTES")) {
        std::size_t n = 0;
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), n);
        if (ec != std::errc() || p != v->data() + v->size() || n == 0) {
            throw Error(ErrorCode::InvalidParameter, "GAUSSFIND_MAX_UPLOAD_BYTES must be a positive integer");
        }
        cfg.max_upload_bytes = n;
    }
    cfg.replay.kind = BackendKind::Replay;
    cfg.replay.fixture_dir = env("GAUSSFIND_FIXTURE_DIR").value_or("fixtures");
    cfg.live.kind = BackendKind::Live;
    cfg.live.endpoint_url = env("GAUSSFIND_LIVE_ENDPOINT");
    cfg.live.api_key_env_var = env("GAUSSFIND_API_KEY_VAR").value_or("GEMINI_API_KEY");
    if (auto v = env("GAUSSFIND_MODEL")) cfg.live.model_name = *v;
    return cfg;
}

json to_json(const SessionInfo& s) {
    json j = {{"id", s.id},
              {"state", std::string(to_string(s.state))},
              {"stage", s.stage ? json(std::string(to_string(*s.stage))) : json(nullptr)},
              {"error", s.error},
              {"source_name", s.source_name},
              {"backend_id", s.backend_id},
              {"created_at", s.created_at},
              {"updated_at", s.updated_at},
              {"options", to_json(s.options)}};
    return j;
}

static SessionInfo session_info_from_json(const json& j) {
    SessionInfo s;
    s.id = j.at("id").get<std::string>();
    auto st = session_state_from_string(j.at("state").get<std::string>());
    if (!st) throw Error(ErrorCode::SchemaViolation, "unknown session state");
    s.state = *st;
    if (auto it = j.find("stage"); it != j.end() && it->is_string()) {
        for (auto stage : {Stage::Prompting, Stage::Parsing, Stage::Validating, Stage::Rendering, Stage::Reporting}) {
            if (to_string(stage) == it->get<std::string>()) s.stage = stage;
        }
    }
    s.error = j.value("error", json());
    s.source_name = j.value("source_name", std::string());
    s.backend_id = j.value("backend_id", std::string());
    s.created_at = j.value("created_at", std::string());
    s.updated_at = j.value("updated_at", std::string());
    s.options = pipeline_options_from_json(j.value("options", json::object()));
    return s;
}

json to_json(const EditResult& r) {
    return {{"finding", r.finding}, {"validation_entries", r.entries}, {"artifacts", r.artifact_hashes}};
}

const std::map<std::string, std::string>& artifact_kinds() {
    static const std::map<std::string, std::string> kinds = {
        {"original", files::kOriginal},        {"sketch", files::kSketch},
        {"overlay", files::kOverlay},          {"heatmap", files::kHeatmap},
        {"composite", files::kComposite},      {"report.json", files::kReportJson},
        {"report.md", files::kReportMd},       {"report.html", files::kReportHtml},
        {"analysis.json", files::kAnalysis},   {"validation.json", files::kValidation},
        {"raw.txt", files::kRaw},
    };
    return kinds;
}

static std::string content_type_for(const std::string& file) {
    if (file.ends_with(".png")) return "image/png";
    if (file.ends_with(".json")) return "application/json";
    if (file.ends_with(".md")) return "text/markdown; charset=utf-8";
    if (file.ends_with(".html")) return "text/html; charset=utf-8";
    return "text/plain; charset=utf-8";
}

struct AnalysisService::Session {
    mutable std::mutex info_mu;  // guards info
    std::condition_variable cv;
    SessionInfo info;
    std::mutex op_mu;  // serializes run and edits
    std::jthread worker;
};

AnalysisService::AnalysisService(ServiceConfig cfg, Transport transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), gateway_(std::make_unique<VlmGateway>(std::move(transport), std::move(sleeper))) {
    fs::create_directories(cfg_.sessions_dir);
    for (const auto& entry : fs::directory_iterator(cfg_.sessions_dir)) {
        const fs::path state = entry.path() / files::kState;
        if (!entry.is_directory() || !fs::exists(state)) continue;
        try {
            auto s = std::make_shared<Session>();
            s->info = session_info_from_json(json::parse(read_text(state)));
            if (s->info.id != entry.path().filename().string()) continue;
            if (s->info.state == SessionState::Running) {
                s->info.state = SessionState::Failed;
                s->info.error = {{"code", "Interrupted"},
                                 {"message", "service restarted while the analysis was running"}};
                s->info.updated_at = now();
                persist(*s);
            }
            sessions_.emplace(s->info.id, std::move(s));
        } catch (const std::exception& e) {
            std::cerr << "skipping session " << entry.path() << ": " << e.what() << "\n";
        }
    }
}

AnalysisService::~AnalysisService() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(sessions_mu_);
        for (auto& [id, s] : sessions_) all.push_back(s);
    }
    for (auto& s : all) {
        if (s->worker.joinable()) s->worker.join();
    }
}

std::string AnalysisService::now() const {
    return format_utc(cfg_.clock ? cfg_.clock() : std::chrono::system_clock::now());
}

fs::path AnalysisService::dir_of(const std::string& id) const { return cfg_.sessions_dir / id; }

void AnalysisService::persist(const Session& s) const {
    write_atomic(dir_of(s.info.id) / files::kState, to_json(s.info).dump(2) + "\n");
}

std::shared_ptr<AnalysisService::Session> AnalysisService::find(const std::string& id) const {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no analysis with id '" + id + "'");
    return it->second;
}

std::string AnalysisService::create_analysis(std::span<const std::uint8_t> bytes, std::string_view name_hint,
                                             const PipelineOptions& opts) {
    if (bytes.size() > cfg_.max_upload_bytes) {
        throw Error(ErrorCode::PayloadTooLarge, "upload exceeds " + std::to_string(cfg_.max_upload_bytes) + " bytes",
                    {{"limit", cfg_.max_upload_bytes}, {"size", bytes.size()}});
    }
    if (!(opts.render.alpha >= 0.0 && opts.render.alpha <= 1.0)) {
        throw Error(ErrorCode::InvalidParameter, "alpha must lie in [0, 1]");
    }
    if (!(opts.render.threshold >= 0.0 && opts.render.threshold < 1.0)) {
        throw Error(ErrorCode::InvalidParameter, "threshold must lie in [0, 1)");
    }
    const LoadedImage img = prepare_image(bytes, name_hint, opts);

    auto s = std::make_shared<Session>();
    s->info.id = random_token(16);
    s->info.state = SessionState::Created;
    s->info.source_name = img.meta.source_name;
    s->info.options = opts;
    s->info.created_at = s->info.updated_at = now();

    const fs::path dir = dir_of(s->info.id);
    fs::create_directories(dir);
    write_atomic(dir / files::kOriginal, encode_png(img.image));
    persist(*s);

    std::lock_guard lock(sessions_mu_);
    sessions_.emplace(s->info.id, s);
    return s->info.id;
}

BackendConfig AnalysisService::backend_for(std::string_view selector, const std::optional<std::string>& fixture,
                                           const std::optional<std::string>& scripted_text) const {
    auto kind = backend_kind_from_string(selector.empty() ? "replay" : selector);
    if (!kind) throw Error(ErrorCode::InvalidParameter, "unknown backend '" + std::string(selector) + "'");
    BackendConfig b;
    switch (*kind) {
        case BackendKind::Replay:
            b = cfg_.replay;
            b.kind = BackendKind::Replay;
            if (fixture) {
                const fs::path name = fs::path(*fixture).filename();
                if (name.empty() || name.string() != *fixture) {
                    throw Error(ErrorCode::InvalidParameter, "fixture must be a plain file name");
                }
                b.fixture_name = *fixture;
            }
            break;
        case BackendKind::Live:
            b = cfg_.live;
            b.kind = BackendKind::Live;
            break;
        case BackendKind::Scripted:
            b.kind = BackendKind::Scripted;
            if (scripted_text) b.scripted_text = *scripted_text;
            break;
    }
    check(b);
    return b;
}

SessionInfo AnalysisService::run_analysis(const std::string& id, const BackendConfig& backend) {
    check(backend);
    auto s = find(id);
    std::unique_lock lock(s->info_mu);
    if (s->info.state != SessionState::Created) {
        throw Error(ErrorCode::Conflict, "analysis is " + std::string(to_string(s->info.state)),
                    {{"state", std::string(to_string(s->info.state))}});
    }
    s->info.state = SessionState::Running;
    s->info.stage = Stage::Prompting;
    s->info.updated_at = now();
    persist(*s);
    SessionInfo snapshot = s->info;
    lock.unlock();
    s->worker = std::jthread([this, s, backend] { execute(s, backend); });
    return snapshot;
}

void AnalysisService::execute(std::shared_ptr<Session> s, BackendConfig backend) {
    std::lock_guard op(s->op_mu);
    const fs::path dir = dir_of(s->info.id);
    json error;
    std::string backend_id;
    PipelineOptions opts;
    {
        std::lock_guard lock(s->info_mu);
        opts = s->info.options;
    }
    try {
        const ProgressFn progress = [&](Stage st) {
            std::lock_guard lock(s->info_mu);
            s->info.stage = st;
            s->info.updated_at = now();
            persist(*s);
        };
        LoadedImage img = load_image(read_bytes(dir / files::kOriginal), s->info.source_name);
        if (opts.spacing) img.meta.pixel_spacing = opts.spacing;
        ReportContext ctx;
        ctx.clock = cfg_.clock;
        auto result = run_pipeline(img, backend, opts, dir, *gateway_, progress, ctx);
        backend_id = result.raw.backend_id;
    } catch (const Error& e) {
        error = e.to_json();
    } catch (const std::exception& e) {
        error = {{"code", "Internal"}, {"message", e.what()}};
    }
    std::lock_guard lock(s->info_mu);
    s->info.state = error.is_null() ? SessionState::Complete : SessionState::Failed;
    s->info.error = error;
    s->info.backend_id = backend_id;
    s->info.updated_at = now();
    persist(*s);
    s->cv.notify_all();
}

SessionInfo AnalysisService::wait(const std::string& id, std::chrono::milliseconds timeout) {
    auto s = find(id);
    std::unique_lock lock(s->info_mu);
    s->cv.wait_for(lock, timeout, [&] { return s->info.state != SessionState::Running; });
    return s->info;
}

SessionInfo AnalysisService::get(const std::string& id) const {
    auto s = find(id);
    std::lock_guard lock(s->info_mu);
    return s->info;
}

std::vector<SessionInfo> AnalysisService::list() const {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(sessions_mu_);
        for (auto& [id, s] : sessions_) all.push_back(s);
    }
    std::vector<SessionInfo> out;
    for (auto& s : all) {
        std::lock_guard lock(s->info_mu);
        out.push_back(s->info);
    }
    return out;
}

Artifact AnalysisService::get_artifact(const std::string& id, const std::string& kind) const {
    auto s = find(id);
    const auto& kinds = artifact_kinds();
    auto it = kinds.find(kind);
    if (it == kinds.end()) throw Error(ErrorCode::NotFound, "unknown artifact kind '" + kind + "'");
    SessionState state;
    {
        std::lock_guard lock(s->info_mu);
        state = s->info.state;
    }
    const bool raw_on_failure = state == SessionState::Failed && kind == "raw.txt";
    if (state != SessionState::Complete && !raw_on_failure) {
        throw Error(ErrorCode::Conflict, "analysis is " + std::string(to_string(state)),
                    {{"state", std::string(to_string(state))}});
    }
    const fs::path p = dir_of(id) / it->second;
    if (!fs::exists(p)) throw Error(ErrorCode::NotFound, "artifact '" + kind + "' was not produced");
    return {read_bytes(p), content_type_for(it->second)};
}

json AnalysisService::analysis(const std::string& id) const {
    auto s = find(id);
    {
        std::lock_guard lock(s->info_mu);
        if (s->info.state != SessionState::Complete) {
            throw Error(ErrorCode::Conflict, "analysis is " + std::string(to_string(s->info.state)));
        }
    }
    return json::parse(read_text(dir_of(id) / files::kAnalysis));
}

namespace {

struct StoredAnalysis {
    AnalysisResponse analysis;
    ValidationLog log;
    std::vector<std::string> warnings;
};

StoredAnalysis read_stored(const fs::path& dir) {
    const json doc = json::parse(read_text(dir / files::kAnalysis));
    StoredAnalysis out;
    out.analysis = doc.get<AnalysisResponse>();
    if (auto it = doc.find("validation_log"); it != doc.end()) out.log = it->get<ValidationLog>();
    if (auto it = doc.find("parse_warnings"); it != doc.end()) out.warnings = it->get<std::vector<std::string>>();
    return out;
}

double number_at(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw Error(ErrorCode::SchemaViolation, path + "." + key + " must be a number",
                    {{"paths", {path + "." + key}}});
    }
    return it->get<double>();
}

void merge_optional(const json& j, const char* key, double& target) {
    if (auto it = j.find(key); it != j.end()) {
        if (!it->is_number()) {
            throw Error(ErrorCode::SchemaViolation, std::string(key) + " must be a number", {{"paths", {key}}});
        }
        target = it->get<double>();
    }
}

void apply_edit(Finding& f, const json& edit) {
    if (!edit.is_object()) throw Error(ErrorCode::SchemaViolation, "edit must be a JSON object");
    for (const auto& [key, value] : edit.items()) {
        if (key != "center" && key != "bbox" && key != "gaussian") {
            throw Error(ErrorCode::InvalidParameter, "unsupported edit field '" + key + "'",
                        {{"allowed", {"center", "bbox", "gaussian"}}});
        }
        if (!value.is_object()) {
            throw Error(ErrorCode::SchemaViolation, key + " must be an object", {{"paths", {key}}});
        }
    }
    if (auto c = edit.find("center"); c != edit.end()) {
        f.center = {number_at(*c, "x", "center"), number_at(*c, "y", "center")};
    }
    if (auto b = edit.find("bbox"); b != edit.end()) {
        merge_optional(*b, "x_min", f.bbox.x_min);
        merge_optional(*b, "y_min", f.bbox.y_min);
        merge_optional(*b, "x_max", f.bbox.x_max);
        merge_optional(*b, "y_max", f.bbox.y_max);
    }
    if (auto g = edit.find("gaussian"); g != edit.end()) {
        GaussianParams p = f.gaussian.value_or(GaussianParams{f.center.x, f.center.y, 1.0, 1.0, 0.0});
        merge_optional(*g, "mu_x", p.mu_x);
        merge_optional(*g, "mu_y", p.mu_y);
        merge_optional(*g, "sigma_x", p.sigma_x);
        merge_optional(*g, "sigma_y", p.sigma_y);
        merge_optional(*g, "theta", p.theta);
        f.gaussian = p;
    }
    // Coordinates now come from a person, not a default.
    f.low_trust = false;
}

}  // namespace

std::map<std::string, std::string> AnalysisService::regenerate(Session& s, const AnalysisResponse& analysis,
                                                               const ValidationLog& log) {
    const fs::path dir = dir_of(s.info.id);
    const StoredAnalysis previous = read_stored(dir);
    const LoadedImage img = load_image(read_bytes(dir / files::kOriginal), s.info.source_name);
    PipelineOptions opts;
    ReportContext ctx;
    {
        std::lock_guard lock(s.info_mu);
        opts = s.info.options;
        ctx.backend_id = s.info.backend_id.empty() ? "unknown" : s.info.backend_id;
    }
    ctx.clock = cfg_.clock;
    write_artifacts(img.image, analysis, log, opts, dir, ctx, previous.warnings);

    std::map<std::string, std::string> hashes;
    for (const auto& [kind, file] : artifact_kinds()) {
        if (kind == "original" || kind == "raw.txt") continue;
        hashes[kind] = sha256_hex(read_bytes(dir / file));
    }
    std::lock_guard lock(s.info_mu);
    s.info.updated_at = now();
    persist(s);
    return hashes;
}

static void require_complete(const SessionInfo& info) {
    if (info.state != SessionState::Complete) {
        throw Error(ErrorCode::Conflict, "analysis is " + std::string(to_string(info.state)),
                    {{"state", std::string(to_string(info.state))}});
    }
}

EditResult AnalysisService::patch_finding(const std::string& id, int finding_id, const json& edit) {
    auto s = find(id);
    std::lock_guard op(s->op_mu);
    {
        std::lock_guard lock(s->info_mu);
        require_complete(s->info);
    }
    StoredAnalysis stored = read_stored(dir_of(id));
    auto it = std::find_if(stored.analysis.findings.begin(), stored.analysis.findings.end(),
                           [&](const Finding& f) { return f.id == finding_id; });
    if (it == stored.analysis.findings.end()) {
        throw Error(ErrorCode::NotFound, "no finding with id " + std::to_string(finding_id));
    }
    Finding edited = *it;
    apply_edit(edited, edit);
    FindingValidation v = validate_finding(edited, stored.analysis.image, EditOrigin::Human);
    *it = v.finding;
    stored.log.entries.insert(stored.log.entries.end(), v.entries.begin(), v.entries.end());

    EditResult out;
    out.finding = v.finding;
    out.entries = std::move(v.entries);
    out.artifact_hashes = regenerate(*s, stored.analysis, stored.log);
    return out;
}

EditResult AnalysisService::add_finding(const std::string& id, const json& finding) {
    auto s = find(id);
    std::lock_guard op(s->op_mu);
    {
        std::lock_guard lock(s->info_mu);
        require_complete(s->info);
    }
    if (!finding.is_object()) throw Error(ErrorCode::SchemaViolation, "finding must be a JSON object");
    StoredAnalysis stored = read_stored(dir_of(id));
    Finding f = coerce_response(json{{"findings", json::array({finding})}}, stored.analysis.image).response.findings.at(0);
    int next_id = 1;
    for (const auto& existing : stored.analysis.findings) next_id = std::max(next_id, existing.id + 1);
    f.id = next_id;
    FindingValidation v = validate_finding(f, stored.analysis.image, EditOrigin::Human);
    stored.analysis.findings.push_back(v.finding);
    stored.log.entries.insert(stored.log.entries.end(), v.entries.begin(), v.entries.end());

    EditResult out;
    out.finding = v.finding;
    out.entries = std::move(v.entries);
    out.artifact_hashes = regenerate(*s, stored.analysis, stored.log);
    return out;
}

std::map<std::string, std::string> AnalysisService::delete_finding(const std::string& id, int finding_id) {
    auto s = find(id);
    std::lock_guard op(s->op_mu);
    {
        std::lock_guard lock(s->info_mu);
        require_complete(s->info);
    }
    StoredAnalysis stored = read_stored(dir_of(id));
    auto& list = stored.analysis.findings;
    auto it = std::find_if(list.begin(), list.end(), [&](const Finding& f) { return f.id == finding_id; });
    if (it == list.end()) throw Error(ErrorCode::NotFound, "no finding with id " + std::to_string(finding_id));
    list.erase(it);
    return regenerate(*s, stored.analysis, stored.log);
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound:
        case ErrorCode::FixtureMissing: return 404;
        case ErrorCode::Conflict: return 409;
        case ErrorCode::PayloadTooLarge: return 413;
        case ErrorCode::DegenerateFinding: return 422;
        case ErrorCode::IoError: return 500;
        case ErrorCode::Timeout:
        case ErrorCode::AuthFailure:
        case ErrorCode::BackendUnavailable: return 502;
        default: return 400;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(2, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, const Error& e) { send_json(res, http_status(e.code()), {{"error", e.to_json()}}); }

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const json::exception& e) {
            send_error(res, Error(ErrorCode::SchemaViolation, std::string("malformed JSON: ") + e.what()));
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", {{"code", "Internal"}, {"message", e.what()}}}});
        }
    };
}

std::optional<std::string> param(const httplib::Request& req, const std::string& key) {
    if (req.has_file(key)) return req.get_file_value(key).content;
    if (req.has_param(key)) return req.get_param_value(key);
    return std::nullopt;
}

bool parse_flag(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw Error(ErrorCode::InvalidParameter, key + " must be a boolean");
}

double parse_number(const std::string& key, const std::string& v) {
    double d = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec != std::errc() || p != v.data() + v.size()) throw Error(ErrorCode::InvalidParameter, key + " must be a number");
    return d;
}

PipelineOptions options_from_request(const httplib::Request& req) {
    PipelineOptions o;
    if (auto v = param(req, "contrast_stretch")) o.preprocess.contrast_stretch = parse_flag("contrast_stretch", *v);
    if (auto v = param(req, "median_filter")) o.preprocess.median_filter = parse_flag("median_filter", *v);
    if (auto v = param(req, "alpha")) o.render.alpha = parse_number("alpha", *v);
    if (auto v = param(req, "threshold")) o.render.threshold = parse_number("threshold", *v);
    if (auto v = param(req, "require_gaussian")) o.require_gaussian = parse_flag("require_gaussian", *v);
    if (auto v = param(req, "require_contours")) o.require_contours = parse_flag("require_contours", *v);
    if (auto v = param(req, "language")) o.language = *v;
    if (auto v = param(req, "spacing")) {
        const auto comma = v->find(',');
        if (comma == std::string::npos) throw Error(ErrorCode::InvalidParameter, "spacing must be 'x,y'");
        o.spacing = PixelSpacing{parse_number("spacing", v->substr(0, comma)),
                                 parse_number("spacing", v->substr(comma + 1))};
    }
    return o;
}

int finding_id_of(const std::string& s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw Error(ErrorCode::NotFound, "bad finding id");
    return v;
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) throw Error(ErrorCode::EmptyInput, "request body is empty");
    return json::parse(req.body);
}

}  // namespace

struct HttpFrontend::Impl {
    explicit Impl(AnalysisService& s) : service(s) {}
    AnalysisService& service;
    httplib::Server server;
};

HttpFrontend::HttpFrontend(AnalysisService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& svr = impl_->server;
    AnalysisService& svc = service;
    // Multipart framing adds a little on top of the image itself.
    svr.set_payload_max_length(svc.config().max_upload_bytes + 64 * 1024);

    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 413) {
            send_error(res, Error(ErrorCode::PayloadTooLarge, "upload exceeds the configured limit"));
        } else if (res.status == 404) {
            send_error(res, Error(ErrorCode::NotFound, "no such route"));
        }
    });
    svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

    svr.Get("/analyses", guarded([&svc](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& s : svc.list()) arr.push_back(to_json(s));
        send_json(res, 200, {{"analyses", arr}});
    }));

    svr.Post("/analyses", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        std::string bytes;
        std::string name = req.has_param("name") ? req.get_param_value("name") : std::string();
        if (req.is_multipart_form_data()) {
            if (req.has_file("image")) {
                auto file = req.get_file_value("image");
                bytes = std::move(file.content);
                if (!file.filename.empty()) name = file.filename;
            }
        } else {
            bytes = req.body;
        }
        if (bytes.empty()) throw Error(ErrorCode::EmptyInput, "no image bytes in request");
        const std::string id = svc.create_analysis(as_bytes(bytes), name, options_from_request(req));
        res.set_header("Location", "/analyses/" + id);
        send_json(res, 201, to_json(svc.get(id)));
    }));

    svr.Post(R"(/analyses/([0-9a-f]+)/run)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const std::string backend = req.has_param("backend") ? req.get_param_value("backend") : "replay";
        std::optional<std::string> fixture;
        if (req.has_param("fixture")) fixture = req.get_param_value("fixture");
        std::optional<std::string> scripted;
        if (!req.body.empty()) scripted = req.body;
        svc.get(id);  // unknown ids are 404 before backend configuration errors
        const auto info = svc.run_analysis(id, svc.backend_for(backend, fixture, scripted));
        send_json(res, 202, to_json(info));
    }));

    svr.Get(R"(/analyses/([0-9a-f]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const SessionInfo info = svc.get(id);
        json body = to_json(info);
        if (info.state == SessionState::Complete) body["analysis"] = svc.analysis(id);
        send_json(res, 200, body);
    }));

    svr.Get(R"(/analyses/([0-9a-f]+)/artifacts/([A-Za-z0-9._]+))",
            guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const Artifact a = svc.get_artifact(req.matches[1], req.matches[2]);
                res.status = 200;
                res.set_content(std::string(a.bytes.begin(), a.bytes.end()), a.content_type);
                res.set_header("Cache-Control", "no-store");
            }));

    svr.Patch(R"(/analyses/([0-9a-f]+)/findings/([^/]+))",
              guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  svc.get(id);
                  const int fid = finding_id_of(req.matches[2]);
                  send_json(res, 200, to_json(svc.patch_finding(id, fid, parse_body(req))));
              }));

    svr.Post(R"(/analyses/([0-9a-f]+)/findings)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        svc.get(id);
        send_json(res, 201, to_json(svc.add_finding(id, parse_body(req))));
    }));

    svr.Delete(R"(/analyses/([0-9a-f]+)/findings/([^/]+))",
               guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                   const std::string id = req.matches[1];
                   svc.get(id);
                   const int fid = finding_id_of(req.matches[2]);
                   const auto hashes = svc.delete_finding(id, fid);  // may throw; keep it out of the initializer list
                   send_json(res, 200, {{"artifacts", hashes}});
               }));
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpFrontend::listen() { return impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace gaussfind
