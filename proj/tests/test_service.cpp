#include "gaussfind/digest.hpp"
#include "gaussfind/error.hpp"
#include "gaussfind/service.hpp"

#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace gaussfind;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

ServiceConfig config_in(const std::filesystem::path& dir) {
    ServiceConfig cfg;
    cfg.sessions_dir = dir;
    cfg.replay.kind = BackendKind::Replay;
    cfg.replay.fixture_dir = testing::fixture_dir() / "replay";
    return cfg;
}

std::vector<std::uint8_t> phantom() { return testing::slurp(testing::fixture_dir() / "images" / "phantom_ct_chest.png"); }

const char* kSingleFinding = R"({"findings": [{"id": 1, "label": "focus", "bbox": [40, 40, 80, 80],
  "center": [60, 60], "confidence": 6,
  "gaussian": {"mu_x": 60, "mu_y": 60, "sigma_x": 3, "sigma_y": 3, "theta": 0}}]})";

/// Server on an ephemeral port for the lifetime of the object.
struct LiveServer {
    explicit LiveServer(AnalysisService& svc) : front(svc) {
        port = front.bind("127.0.0.1", 0);
        REQUIRE(port > 0);
        thread = std::thread([this] { front.listen(); });
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        for (int i = 0; i < 200 && !client->Get("/healthz"); ++i) std::this_thread::sleep_for(5ms);
    }
    ~LiveServer() {
        front.stop();
        thread.join();
    }
    HttpFrontend front;
    int port = 0;
    std::thread thread;
    std::unique_ptr<httplib::Client> client;
};

json body_of(const httplib::Result& r) {
    REQUIRE(r);
    return json::parse(r->body);
}

std::string error_code(const httplib::Result& r) { return body_of(r)["error"]["code"].get<std::string>(); }

std::string upload(httplib::Client& c, const std::vector<std::uint8_t>& bytes, const std::string& name) {
    httplib::MultipartFormDataItems items{{"image", std::string(bytes.begin(), bytes.end()), name, "image/png"}};
    auto r = c.Post("/analyses", items);
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return body_of(r)["id"].get<std::string>();
}

/// Location of the reddest pixel relative to green; on a flat base the heat
/// colormap makes this the peak of the field.
std::pair<int, int> heat_peak(const std::vector<std::uint8_t>& png) {
    const auto img = load_image(png, "heatmap.png").image;
    int best = -1000;
    std::pair<int, int> at{-1, -1};
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int score = int(img.pixel(x, y)[0]) - int(img.pixel(x, y)[1]);
            if (score > best) {
                best = score;
                at = {x, y};
            }
        }
    }
    return at;
}

}  // namespace

TEST_CASE("service: create, run and fetch artifacts over HTTP") {
    testing::TempDir dir;
    AnalysisService svc(config_in(dir.path()));
    LiveServer srv(svc);
    auto& c = *srv.client;

    CHECK(body_of(c.Get("/healthz"))["status"] == "ok");
    const std::string id = upload(c, phantom(), "phantom_ct_chest.png");
    CHECK(id.size() == 32);
    CHECK(body_of(c.Get("/analyses/" + id))["state"] == "Created");
    CHECK(c.Get("/analyses/" + id + "/artifacts/overlay")->status == 409);

    auto run = c.Post("/analyses/" + id + "/run?backend=replay&fixture=phantom_ct_chest.txt", "", "text/plain");
    REQUIRE(run);
    CHECK(run->status == 202);
    CHECK(svc.wait(id).state == SessionState::Complete);
    CHECK(c.Post("/analyses/" + id + "/run?backend=replay&fixture=phantom_ct_chest.txt", "", "text/plain")->status ==
          409);

    const auto info = body_of(c.Get("/analyses/" + id));
    CHECK(info["state"] == "Complete");
    CHECK(info["analysis"]["findings"].size() == 2);
    CHECK(body_of(c.Get("/analyses"))["analyses"].size() == 1);

    for (const auto& entry : artifact_kinds()) {
        const std::string& kind = entry.first;
        const std::string& file = entry.second;
        CAPTURE(kind);
        auto r = c.Get("/analyses/" + id + "/artifacts/" + kind);
        REQUIRE(r);
        CHECK(r->status == 200);
        CHECK(r->body == testing::slurp_text(dir.path() / id / file));
    }
    CHECK(c.Get("/analyses/" + id + "/artifacts/heatmap")->get_header_value("Content-Type") == "image/png");
    CHECK(c.Get("/analyses/" + id + "/artifacts/bogus")->status == 404);
}

TEST_CASE("service: HTTP error mapping") {
    testing::TempDir dir;
    auto cfg = config_in(dir.path());
    cfg.max_upload_bytes = 1024;
    AnalysisService svc(cfg);
    LiveServer srv(svc);
    auto& c = *srv.client;

    auto empty = c.Post("/analyses", "", "application/octet-stream");
    CHECK(empty->status == 400);
    CHECK(error_code(empty) == "EmptyInput");

    auto garbage = c.Post("/analyses?name=x.png", "not an image at all", "application/octet-stream");
    CHECK(garbage->status == 400);
    CHECK(error_code(garbage) == "CorruptImage");

    auto big = c.Post("/analyses?name=big.png", std::string(4096, 'x'), "application/octet-stream");
    CHECK(big->status == 413);
    CHECK(error_code(big) == "PayloadTooLarge");

    auto missing = c.Get("/analyses/0123456789abcdef0123456789abcdef");
    CHECK(missing->status == 404);
    CHECK(error_code(missing) == "NotFound");
    CHECK(c.Post("/analyses/0123456789abcdef0123456789abcdef/run", "", "text/plain")->status == 404);

    const auto small = encode_png(testing::solid_rgb(16, 16, {9, 9, 9}));
    const std::string id = upload(c, small, "tiny.png");
    CHECK(c.Post("/analyses/" + id + "/run?backend=quantum", "", "text/plain")->status == 400);
    auto escape = c.Post("/analyses/" + id + "/run?backend=replay&fixture=../secret.txt", "", "text/plain");
    CHECK(escape->status == 400);
    auto absent = c.Post("/analyses/" + id + "/run?backend=replay&fixture=absent.txt", "", "text/plain");
    REQUIRE(absent->status == 202);
    const auto failed = svc.wait(id);
    CHECK(failed.state == SessionState::Failed);
    CHECK(failed.error["code"] == "FixtureMissing");

    auto opts = c.Options("/analyses");
    CHECK(opts->status == 204);
    CHECK(opts->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("service: unparseable output fails but keeps raw text") {
    testing::TempDir dir;
    AnalysisService svc(config_in(dir.path()));
    const std::string id = svc.create_analysis(phantom(), "phantom_ct_chest.png");
    svc.run_analysis(id, svc.backend_for("replay", "unparseable.txt", std::nullopt));
    const auto info = svc.wait(id);
    CHECK(info.state == SessionState::Failed);
    CHECK(info.error["code"] == "Unparseable");
    CHECK(info.stage == Stage::Parsing);
    const auto raw = svc.get_artifact(id, "raw.txt");
    CHECK(std::string(raw.bytes.begin(), raw.bytes.end()) ==
          testing::slurp_text(testing::fixture_dir() / "replay" / "unparseable.txt"));
    try {
        svc.get_artifact(id, "overlay");
        FAIL("expected Conflict");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Conflict);
    }
}

TEST_CASE("service: finding edits re-validate and regenerate artifacts") {
    testing::TempDir dir;
    AnalysisService svc(config_in(dir.path()));
    LiveServer srv(svc);
    auto& c = *srv.client;

    const std::string id = upload(c, encode_png(testing::solid_rgb(128, 128, {100, 100, 100})), "flat.png");
    REQUIRE(c.Post("/analyses/" + id + "/run?backend=scripted", kSingleFinding, "application/json")->status == 202);
    REQUIRE(svc.wait(id).state == SessionState::Complete);

    const auto sha = [&](const std::string& kind) {
        const auto a = svc.get_artifact(id, kind);
        return sha256_hex(a.bytes);
    };
    std::map<std::string, std::string> before;
    for (const char* k : {"sketch", "overlay", "heatmap", "composite"}) before[k] = sha(k);
    CHECK(heat_peak(svc.get_artifact(id, "heatmap").bytes) == std::pair{60, 60});

    // Center outside the box is repaired and logged as a human edit.
    auto patched = c.Patch("/analyses/" + id + "/findings/1", R"({"center": {"x": 100, "y": 60}})", "application/json");
    REQUIRE(patched);
    CHECK(patched->status == 200);
    const auto edit = json::parse(patched->body);
    CHECK(edit["finding"]["center"] == json{{"x", 80.0}, {"y", 60.0}});
    bool repaired = false;
    for (const auto& e : edit["validation_entries"]) {
        repaired = repaired || (e["check_name"] == "CenterRepair" && e["origin"] == "human");
    }
    CHECK(repaired);

    // Moving the Gaussian mean moves the heat peak by the same amount.
    auto moved = c.Patch("/analyses/" + id + "/findings/1",
                         R"({"gaussian": {"mu_x": 70, "mu_y": 60, "sigma_x": 3, "sigma_y": 3, "theta": 0}})",
                         "application/json");
    REQUIRE(moved->status == 200);
    CHECK(heat_peak(svc.get_artifact(id, "heatmap").bytes) == std::pair{70, 60});
    const auto hashes = json::parse(moved->body)["artifacts"];
    for (const auto& entry : before) {
        const std::string& k = entry.first;
        const std::string& h = entry.second;
        CAPTURE(k);
        CHECK(hashes.at(k) == sha(k));
        CHECK(sha(k) != h);
    }

    CHECK(c.Patch("/analyses/" + id + "/findings/9", R"({"center": {"x": 1, "y": 1}})", "application/json")->status ==
          404);
    CHECK(c.Patch("/analyses/" + id + "/findings/1", R"({"label": "renamed"})", "application/json")->status == 400);
    CHECK(c.Patch("/analyses/" + id + "/findings/1", "{not json", "application/json")->status == 400);
    auto degenerate = c.Patch("/analyses/" + id + "/findings/1", R"({"bbox": {"x_min": 500, "y_min": 500, "x_max": 600, "y_max": 600}})",
                              "application/json");
    CHECK(degenerate->status == 422);

    // Add then delete; ids stay stable.
    auto added = c.Post("/analyses/" + id + "/findings",
                        R"({"label": "manual", "bbox": {"x_min": 10, "y_min": 10, "x_max": 30, "y_max": 30},
                           "center": {"x": 20, "y": 20}, "confidence": 4})",
                        "application/json");
    REQUIRE(added);
    CHECK(added->status == 201);
    CHECK(json::parse(added->body)["finding"]["id"] == 2);
    CHECK(svc.analysis(id)["findings"].size() == 2);
    auto removed = c.Delete("/analyses/" + id + "/findings/1");
    REQUIRE(removed);
    CHECK(removed->status == 200);
    const auto doc = svc.analysis(id);
    REQUIRE(doc["findings"].size() == 1);
    CHECK(doc["findings"][0]["id"] == 2);
    CHECK(c.Delete("/analyses/" + id + "/findings/1")->status == 404);
    const auto report = json::parse(testing::slurp_text(dir.path() / id / files::kReportJson));
    CHECK(report["findings"].size() == 1);
}

TEST_CASE("service: sessions survive a restart and running ones are marked failed") {
    testing::TempDir dir;
    std::string done, pending;
    {
        AnalysisService svc(config_in(dir.path()));
        done = svc.create_analysis(phantom(), "phantom_ct_chest.png");
        svc.run_analysis(done, svc.backend_for("replay", "phantom_ct_chest.txt", std::nullopt));
        REQUIRE(svc.wait(done).state == SessionState::Complete);
        pending = svc.create_analysis(phantom(), "phantom_ct_chest.png");
    }
    // Simulate a crash in the middle of a run.
    auto state = json::parse(testing::slurp_text(dir.path() / pending / files::kState));
    state["state"] = "Running";
    state["stage"] = "Prompting";
    testing::spit(dir.path() / pending / files::kState, state.dump());

    AnalysisService again(config_in(dir.path()));
    CHECK(again.list().size() == 2);
    CHECK(again.get(done).state == SessionState::Complete);
    CHECK(again.analysis(done)["findings"].size() == 2);
    const auto info = again.get(pending);
    CHECK(info.state == SessionState::Failed);
    CHECK(info.error["code"] == "Interrupted");
    const auto persisted = json::parse(testing::slurp_text(dir.path() / pending / files::kState));
    CHECK(persisted["state"] == "Failed");
}

TEST_CASE("service: session state names") {
    for (auto s : {SessionState::Created, SessionState::Running, SessionState::Complete, SessionState::Failed}) {
        CHECK(session_state_from_string(to_string(s)) == s);
    }
    CHECK_FALSE(session_state_from_string("Paused").has_value());
}
