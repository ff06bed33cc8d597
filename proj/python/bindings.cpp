// Python extension. Structured values cross the boundary as JSON text; the
// pure-Python package turns them into dicts. Pixel data crosses as numpy arrays.

#include "gaussfind/error.hpp"
#include "gaussfind/gaussian_field.hpp"
#include "gaussfind/geometry.hpp"
#include "gaussfind/ingest.hpp"
#include "gaussfind/pipeline.hpp"
#include "gaussfind/render.hpp"
#include "gaussfind/report.hpp"
#include "gaussfind/response_parser.hpp"
#include "gaussfind/vlm_gateway.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

namespace py = pybind11;
using namespace gaussfind;
using nlohmann::json;

namespace {

ImageMeta meta_of(int width, int height) {
    ImageMeta m;
    m.width = width;
    m.height = height;
    return m;
}

py::array_t<std::uint8_t> to_numpy(const RasterImage& img) {
    py::array_t<std::uint8_t> out({img.height, img.width, img.channel_count()});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size());
    return out;
}

RasterImage from_numpy(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || (a.shape(2) != 3 && a.shape(2) != 4)) {
        throw Error(ErrorCode::InvalidParameter, "image array must have shape (height, width, 3 or 4)");
    }
    RasterImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                    a.shape(2) == 3 ? Channels::RGB : Channels::RGBA);
    std::memcpy(img.data.data(), a.data(), img.data.size());
    return img;
}

py::array_t<double> to_numpy(const ScalarField& f) {
    py::array_t<double> out({f.height, f.width});
    std::memcpy(out.mutable_data(), f.values.data(), f.values.size() * sizeof(double));
    return out;
}

ScalarField from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw Error(ErrorCode::InvalidParameter, "field array must be two-dimensional");
    ScalarField f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(f.values.data(), a.data(), f.values.size() * sizeof(double));
    return f;
}

std::span<const std::uint8_t> bytes_view(const py::bytes& b) {
    const std::string_view v(b);
    return {reinterpret_cast<const std::uint8_t*>(v.data()), v.size()};
}

BackendConfig backend_from_json(const json& j) {
    BackendConfig b;
    const auto kind = backend_kind_from_string(j.value("kind", std::string("replay")));
    if (!kind) throw Error(ErrorCode::InvalidParameter, "unknown backend kind");
    b.kind = *kind;
    if (j.contains("fixture_dir")) b.fixture_dir = j["fixture_dir"].get<std::string>();
    if (j.contains("fixture_name")) b.fixture_name = j["fixture_name"].get<std::string>();
    if (j.contains("scripted_text")) b.scripted_text = j["scripted_text"].get<std::string>();
    if (j.contains("endpoint_url")) b.endpoint_url = j["endpoint_url"].get<std::string>();
    if (j.contains("api_key_env_var")) b.api_key_env_var = j["api_key_env_var"].get<std::string>();
    if (j.contains("model_name")) b.model_name = j["model_name"].get<std::string>();
    if (j.contains("timeout")) b.timeout = std::chrono::duration<double>(j["timeout"].get<double>());
    if (j.contains("max_retries")) b.max_retries = j["max_retries"].get<int>();
    return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the gaussfind localization pipeline";

    static py::exception<Error> error_type(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            // args: (code, message, detail as JSON text)
            py::tuple args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()), e.detail().dump());
            PyErr_SetObject(error_type.ptr(), args.ptr());
        }
    });

    m.def("clamp_coordinate", &clamp_coordinate, py::arg("raw"), py::arg("extent"));
    m.def("rho_from_theta", &rho_from_theta, py::arg("theta"), py::arg("sigma_x"), py::arg("sigma_y"));
    m.def(
        "pdf", [](double x, double y, const std::string& g) { return pdf(x, y, json::parse(g).get<GaussianParams>()); },
        py::arg("x"), py::arg("y"), py::arg("gaussian_json"));
    m.def(
        "rasterize",
        [](const std::string& g, int width, int height) {
            return to_numpy(rasterize(json::parse(g).get<GaussianParams>(), meta_of(width, height)));
        },
        py::arg("gaussian_json"), py::arg("width"), py::arg("height"));
    m.def(
        "compose_max",
        [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& arrays) {
            std::vector<ScalarField> fields;
            for (const auto& a : arrays) fields.push_back(from_numpy(a));
            return to_numpy(compose_max(fields));
        },
        py::arg("fields"));

    m.def(
        "parse_response",
        [](const std::string& raw, int width, int height) {
            const auto extracted = extract_structured(raw);
            auto coerced = coerce_response(extracted.value, meta_of(width, height));
            auto warnings = extracted.warnings;
            warnings.insert(warnings.end(), coerced.warnings.begin(), coerced.warnings.end());
            return json{{"strategy", std::string(to_string(extracted.strategy_used))},
                        {"response", coerced.response},
                        {"warnings", warnings}}
                .dump();
        },
        py::arg("raw"), py::arg("width"), py::arg("height"));
    m.def(
        "validate_analysis",
        [](const std::string& analysis) {
            const auto v = validate_analysis(json::parse(analysis).get<AnalysisResponse>());
            return json{{"response", v.response}, {"log", v.log}}.dump();
        },
        py::arg("analysis_json"));

    m.def(
        "load_image",
        [](const py::bytes& data, const std::string& name) {
            const auto img = load_image(bytes_view(data), name);
            return py::make_tuple(to_numpy(img.image), json(img.meta).dump());
        },
        py::arg("data"), py::arg("name_hint") = "");
    m.def(
        "encode_png", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
            const auto bytes = encode_png(from_numpy(a));
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("image"));
    m.def(
        "render_all",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image,
           const std::string& analysis, double alpha, double threshold) {
            const auto set = render_all(from_numpy(image), json::parse(analysis).get<AnalysisResponse>(),
                                        RenderOptions{alpha, threshold});
            py::dict out;
            out["sketch"] = to_numpy(set.sketch);
            out["overlay"] = to_numpy(set.overlay);
            out["heatmap"] = to_numpy(set.heatmap);
            out["composite"] = to_numpy(set.composite);
            out["field"] = to_numpy(set.field);
            return out;
        },
        py::arg("image"), py::arg("analysis_json"), py::arg("alpha") = kDefaultOverlayAlpha,
        py::arg("threshold") = kDefaultHeatmapThreshold);

    m.def(
        "build_report",
        [](const std::string& analysis, const std::string& log, std::optional<std::pair<double, double>> spacing) {
            std::optional<PixelSpacing> ps;
            if (spacing) ps = PixelSpacing{spacing->first, spacing->second};
            const auto report = build_report(json::parse(analysis).get<AnalysisResponse>(),
                                             json::parse(log).get<ValidationLog>(), ps);
            return report_to_json(report).dump();
        },
        py::arg("analysis_json"), py::arg("log_json") = R"({"entries": []})", py::arg("spacing") = py::none());
    m.def(
        "export_report",
        [](const std::string& report, const std::string& format) {
            const auto f = report_format_from_string(format);
            if (!f) throw Error(ErrorCode::InvalidParameter, "unknown report format '" + format + "'");
            return export_report(report_from_json(json::parse(report)), *f);
        },
        py::arg("report_json"), py::arg("format"));

    m.def(
        "build_prompt",
        [](int width, int height, bool require_gaussian, bool require_contours, const std::string& language) {
            PromptSpec s;
            s.image_meta = meta_of(width, height);
            s.require_gaussian = require_gaussian;
            s.require_contours = require_contours;
            s.language = language;
            return build_prompt(s);
        },
        py::arg("width"), py::arg("height"), py::arg("require_gaussian") = true, py::arg("require_contours") = true,
        py::arg("language") = "en");

    m.def(
        "analyze",
        [](const std::string& image_path, const std::string& out_dir, const std::string& backend,
           const std::string& options) {
            const PipelineOptions opts = pipeline_options_from_json(json::parse(options));
            const BackendConfig cfg = backend_from_json(json::parse(backend));
            PipelineResult result;
            {
                py::gil_scoped_release release;
                const auto img = prepare_image(read_bytes(image_path), std::filesystem::path(image_path).filename().string(),
                                               opts);
                VlmGateway gateway;
                result = run_pipeline(img, cfg, opts, out_dir, gateway);
            }
            return json{{"analysis", result.analysis},
                        {"validation_log", result.log},
                        {"warnings", result.warnings},
                        {"report", report_to_json(result.report)},
                        {"backend_id", result.raw.backend_id},
                        {"request_digest", result.raw.request_digest}}
                .dump();
        },
        py::arg("image_path"), py::arg("out_dir"), py::arg("backend_json"), py::arg("options_json") = "{}");
}
