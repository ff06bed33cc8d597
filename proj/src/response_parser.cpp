#include "gaussfind/response_parser.hpp"

#include "gaussfind/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <optional>

namespace gaussfind {

using nlohmann::json;

std::string_view to_string(ExtractionStrategy s) {
    switch (s) {
        case ExtractionStrategy::DirectParse: return "DirectParse";
        case ExtractionStrategy::FencedBlock: return "FencedBlock";
        case ExtractionStrategy::BalancedBraceScan: return "BalancedBraceScan";
        case ExtractionStrategy::KeyValueFallback: return "KeyValueFallback";
    }
    return "DirectParse";
}

namespace {

constexpr std::size_t kMaxBraceCandidates = 64;
constexpr std::size_t kMaxSalvageLine = 1024;

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::optional<json> parse_object(std::string_view text) {
    json j = json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

// Replaces malformed UTF-8 with U+FFFD so salvaged text can always be serialized.
std::string sanitize_utf8(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        const auto c = static_cast<unsigned char>(in[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        bool ok = len > 0 && i + len <= in.size();
        for (std::size_t k = 1; ok && k < len; ++k) ok = (static_cast<unsigned char>(in[i + k]) >> 6) == 0x2;
        if (ok && len == 2 && c < 0xC2) ok = false;
        if (ok && len >= 3) {
            // reject overlong, surrogate and out-of-range encodings
            const auto c1 = static_cast<unsigned char>(in[i + 1]);
            if (len == 3 && ((c == 0xE0 && c1 < 0xA0) || (c == 0xED && c1 >= 0xA0))) ok = false;
            if (len == 4 && ((c == 0xF0 && c1 < 0x90) || (c == 0xF4 && c1 >= 0x90) || c > 0xF4)) ok = false;
        }
        if (ok && len == 1 && c < 0x20 && c != '\t') ok = false;
        if (ok) {
            out.append(in.substr(i, len));
            i += len;
        } else {
            out += "\xEF\xBF\xBD";
            ++i;
        }
    }
    return out;
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

// --- strategy 2 ------------------------------------------------------------

std::optional<std::string_view> first_fenced_block(std::string_view text) {
    const auto open = text.find("```");
    if (open == std::string_view::npos) return std::nullopt;
    std::size_t body = open + 3;
    // An info string (```json, ```JSON5, ...) occupies the rest of the opening line.
    std::size_t p = body;
    while (p < text.size() && (std::isalnum(static_cast<unsigned char>(text[p])) || text[p] == '-' || text[p] == '_')) ++p;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t' || text[p] == '\r')) ++p;
    if (p < text.size() && text[p] == '\n') body = p + 1;
    const auto close = text.find("```", body);
    if (close == std::string_view::npos) return std::nullopt;
    return trim(text.substr(body, close - body));
}

// --- strategy 3 ------------------------------------------------------------

// Returns the end (inclusive) of the balanced region opened at `start`.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i;
    }
    return std::nullopt;
}

std::optional<std::pair<std::string_view, json>> first_balanced_object(std::string_view text) {
    std::size_t pos = text.find('{');
    std::size_t tried = 0;
    while (pos != std::string_view::npos && tried++ < kMaxBraceCandidates) {
        if (auto end = balanced_end(text, pos)) {
            auto region = text.substr(pos, *end - pos + 1);
            if (auto obj = parse_object(region)) return std::make_pair(region, std::move(*obj));
        }
        pos = text.find('{', pos + 1);
    }
    return std::nullopt;
}

// --- strategy 4 ------------------------------------------------------------

std::string normalize_key(std::string_view key) {
    std::string out;
    for (char c : key) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
        else if ((c == ' ' || c == '_' || c == '-' || c == '.') && !out.empty() && out.back() != '_') out.push_back('_');
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || s.empty()) return std::nullopt;
    std::string_view rest = trim(s.substr(static_cast<std::size_t>(ptr - s.data())));
    if (!rest.empty() && rest != "px" && rest != "pixels" && rest != "rad" && rest != "/10") return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

// "[1, 2, 3, 4]", "(1,2)", "1 2" -> numbers; nullopt if any token is not numeric.
std::optional<std::vector<double>> parse_number_list(std::string_view s) {
    std::vector<double> out;
    std::string token;
    const auto flush = [&]() -> bool {
        if (token.empty()) return true;
        auto v = parse_number(token);
        token.clear();
        if (!v) return false;
        out.push_back(*v);
        return true;
    };
    for (char c : s) {
        if (c == '[' || c == ']' || c == '(' || c == ')' || c == ',' || c == ' ' || c == '\t' || c == ';') {
            if (!flush()) return std::nullopt;
        } else {
            token.push_back(c);
        }
    }
    if (!flush()) return std::nullopt;
    return out;
}

struct KeyValue {
    std::string key;
    std::string_view value;
};

std::optional<KeyValue> split_line(std::string_view line) {
    line = trim(line);
    if (line.size() > kMaxSalvageLine) return std::nullopt;
    while (!line.empty() && (line.front() == '-' || line.front() == '*' || line.front() == '#' || line.front() == '>' ||
                             line.front() == '"' || line.front() == '\'' || line.front() == ' ')) {
        line.remove_prefix(1);
    }
    const auto sep = line.find_first_of(":=");
    if (sep == std::string_view::npos || sep == 0 || sep > 48) return std::nullopt;
    std::string_view raw_key = line.substr(0, sep);
    for (char c : raw_key) {
        const auto u = static_cast<unsigned char>(c);
        if (!(std::isalnum(u) || c == ' ' || c == '_' || c == '-' || c == '.' || c == '*' || c == '"' || c == '\'')) {
            return std::nullopt;
        }
    }
    std::string key = normalize_key(raw_key);
    if (key.empty() || !std::isalpha(static_cast<unsigned char>(key.front()))) return std::nullopt;
    std::string_view value = trim(line.substr(sep + 1));
    while (!value.empty() && (value.front() == '*' || value.front() == ' ')) value.remove_prefix(1);
    while (!value.empty() && (value.back() == ',' || value.back() == '*' || value.back() == ' ')) value.remove_suffix(1);
    if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') || (value.front() == '\'' && value.back() == '\''))) {
        value = value.substr(1, value.size() - 2);
    }
    return KeyValue{std::move(key), value};
}

bool key_in(const std::string& key, std::initializer_list<std::string_view> names) {
    return std::find(names.begin(), names.end(), key) != names.end();
}

bool is_finding_header(const std::string& key) {
    for (std::string_view stem : {"finding", "abnormality", "lesion"}) {
        if (key.rfind(stem, 0) != 0) continue;
        std::string_view rest = std::string_view(key).substr(stem.size());
        if (rest.empty()) return true;
        if (rest.front() == '_') rest.remove_prefix(1);
        if (rest == "s") return false;
        if (std::all_of(rest.begin(), rest.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            return true;
        }
    }
    return false;
}

std::optional<json> salvage_key_values(std::string_view text, std::size_t& fields_used) {
    json top = json::object();
    json findings = json::array();
    json current;
    fields_used = 0;

    const auto has_geometry = [](const json& f) {
        return f.contains("bbox") || f.contains("center") || f.contains("gaussian");
    };
    const auto flush = [&]() {
        if (current.is_object() && has_geometry(current)) findings.push_back(current);
        current = nullptr;
    };
    const auto ensure = [&]() {
        if (!current.is_object()) current = json::object();
    };
    // Starts a new finding when the field would otherwise be overwritten.
    const auto slot = [&](const std::string& group, const std::string& key) -> json& {
        ensure();
        if (group.empty()) {
            if (current.contains(key)) {
                flush();
                ensure();
            }
            return current[key];
        }
        if (current.contains(group) && current[group].contains(key)) {
            flush();
            ensure();
        }
        return current[group][key];
    };

    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const auto kv = split_line(text.substr(start, nl - start));
        start = nl + 1;
        if (!kv) continue;
        const std::string& key = kv->key;
        const std::string value = sanitize_utf8(kv->value);

        if (key_in(key, {"examination_type", "exam_type", "examination", "exam", "study_type", "study"})) {
            top["examination_type"] = value;
        } else if (key_in(key, {"anatomical_region", "region", "anatomy", "body_region", "body_part"})) {
            top["anatomical_region"] = value;
        } else if (key_in(key, {"overall_impression", "impression", "summary"})) {
            top["overall_impression"] = value;
        } else if (is_finding_header(key)) {
            flush();
            ensure();
            if (!value.empty()) current["label"] = value;
        } else if (key_in(key, {"label", "name", "type"})) {
            slot("", "label") = value;
        } else if (key_in(key, {"description"})) {
            slot("", "description") = value;
        } else if (key_in(key, {"clinical_significance", "significance"})) {
            slot("", "clinical_significance") = value;
        } else if (key_in(key, {"confidence", "confidence_score"})) {
            auto v = parse_number(value);
            if (!v) continue;
            slot("", "confidence") = *v;
        } else if (key_in(key, {"x_min", "y_min", "x_max", "y_max"})) {
            auto v = parse_number(value);
            if (!v) continue;
            slot("bbox", key) = *v;
        } else if (key_in(key, {"center_x", "center_y"})) {
            auto v = parse_number(value);
            if (!v) continue;
            slot("center", key.substr(7)) = *v;
        } else if (key_in(key, {"mu_x", "mu_y", "sigma_x", "sigma_y", "theta"})) {
            auto v = parse_number(value);
            if (!v) continue;
            slot("gaussian", key) = *v;
        } else if (key_in(key, {"bbox", "bounding_box", "box"})) {
            auto v = parse_number_list(value);
            if (!v || v->size() != 4) continue;
            json& b = slot("", "bbox");
            b = {{"x_min", (*v)[0]}, {"y_min", (*v)[1]}, {"x_max", (*v)[2]}, {"y_max", (*v)[3]}};
        } else if (key_in(key, {"center", "centre", "center_point"})) {
            auto v = parse_number_list(value);
            if (!v || v->size() != 2) continue;
            slot("", "center") = {{"x", (*v)[0]}, {"y", (*v)[1]}};
        } else {
            continue;
        }
        ++fields_used;
    }
    flush();

    const bool any = top.contains("examination_type") || top.contains("anatomical_region") || !findings.empty();
    if (!any) return std::nullopt;
    top["findings"] = std::move(findings);
    return top;
}

// --- coercion helpers --------------------------------------------------------

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

class Coercer {
public:
    explicit Coercer(std::vector<std::string>& warnings) : warnings_(warnings) {}

    void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

    const json* member(const json& obj, std::initializer_list<std::string_view> names, const std::string& path) {
        bool first = true;
        for (auto name : names) {
            auto it = obj.find(std::string(name));
            if (it != obj.end() && !it->is_null()) {
                if (!first) warn(path + std::string(name) + ": read as '" + std::string(*names.begin()) + "'");
                return &*it;
            }
            first = false;
        }
        return nullptr;
    }

    std::optional<double> number(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (v->is_number()) {
            const double d = v->get<double>();
            if (std::isfinite(d)) return d;
            warn(path + ": non-finite number ignored");
            return std::nullopt;
        }
        if (v->is_string()) {
            if (auto d = parse_number(v->get_ref<const std::string&>())) {
                warn(path + ": numeric string coerced to " + fmt(*d));
                return d;
            }
        }
        warn(path + ": expected a number, ignored");
        return std::nullopt;
    }

    std::string text(const json* v, const std::string& path) {
        if (!v) return {};
        if (v->is_string()) return v->get<std::string>();
        warn(path + ": non-string value converted to text");
        return dump(*v);
    }

    std::optional<Point> point(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (v->is_array() && v->size() == 2) {
            auto x = number(&(*v)[0], path + "[0]");
            auto y = number(&(*v)[1], path + "[1]");
            if (x && y) return Point{*x, *y};
        } else if (v->is_object()) {
            auto x = number(member(*v, {"x", "center_x", "cx"}, path + "."), path + ".x");
            auto y = number(member(*v, {"y", "center_y", "cy"}, path + "."), path + ".y");
            if (x && y) return Point{*x, *y};
        }
        warn(path + ": unusable point ignored");
        return std::nullopt;
    }

    std::optional<BoundingBox> bbox(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (v->is_array() && v->size() == 4) {
            std::array<double, 4> c{};
            for (std::size_t i = 0; i < 4; ++i) {
                auto d = number(&(*v)[i], path + "[" + std::to_string(i) + "]");
                if (!d) {
                    warn(path + ": unusable bbox ignored");
                    return std::nullopt;
                }
                c[i] = *d;
            }
            return BoundingBox{c[0], c[1], c[2], c[3]};
        }
        if (v->is_object()) {
            const std::string p = path + ".";
            auto x0 = number(member(*v, {"x_min", "xmin", "x1", "left"}, p), p + "x_min");
            auto y0 = number(member(*v, {"y_min", "ymin", "y1", "top"}, p), p + "y_min");
            auto x1 = number(member(*v, {"x_max", "xmax", "x2", "right"}, p), p + "x_max");
            auto y1 = number(member(*v, {"y_max", "ymax", "y2", "bottom"}, p), p + "y_max");
            if (x0 && y0 && x1 && y1) return BoundingBox{*x0, *y0, *x1, *y1};
            auto x = number(member(*v, {"x"}, p), p + "x");
            auto y = number(member(*v, {"y"}, p), p + "y");
            auto w = number(member(*v, {"width", "w"}, p), p + "width");
            auto h = number(member(*v, {"height", "h"}, p), p + "height");
            if (x && y && w && h) {
                warn(path + ": converted from x/y/width/height");
                return BoundingBox{*x, *y, *x + *w, *y + *h};
            }
        }
        warn(path + ": unusable bbox ignored");
        return std::nullopt;
    }

    std::optional<Contour> contour(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (!v->is_array()) {
            warn(path + ": expected an array of points, ignored");
            return std::nullopt;
        }
        Contour c;
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (auto p = point(&(*v)[i], path + "[" + std::to_string(i) + "]")) c.points.push_back(*p);
        }
        return c;
    }

    // Partially specified parameter sets are completed from the center;
    // without both spreads the block is dropped and synthesized later.
    std::optional<GaussianParams> gaussian(const json* v, const std::optional<Point>& center, const std::string& path) {
        if (!v) return std::nullopt;
        if (!v->is_object()) {
            warn(path + ": expected an object, ignored");
            return std::nullopt;
        }
        const std::string p = path + ".";
        auto sx = number(member(*v, {"sigma_x", "std_x", "sd_x"}, p), p + "sigma_x");
        auto sy = number(member(*v, {"sigma_y", "std_y", "sd_y"}, p), p + "sigma_y");
        if (!sx || !sy) {
            warn(path + ": missing sigma_x/sigma_y, will be synthesized from bbox");
            return std::nullopt;
        }
        GaussianParams g;
        g.sigma_x = *sx;
        g.sigma_y = *sy;
        auto mx = number(member(*v, {"mu_x", "mean_x", "center_x"}, p), p + "mu_x");
        auto my = number(member(*v, {"mu_y", "mean_y", "center_y"}, p), p + "mu_y");
        auto th = number(member(*v, {"theta", "rotation", "angle"}, p), p + "theta");
        if (!mx || !my) {
            if (!center) {
                warn(path + ": missing mean and center, will be synthesized from bbox");
                return std::nullopt;
            }
            warn(path + ": missing mean defaulted to center");
        }
        g.mu_x = mx ? *mx : center->x;
        g.mu_y = my ? *my : center->y;
        if (!th) warn(path + ".theta: missing, defaulted to 0");
        g.theta = th ? *th : 0.0;
        return g;
    }

private:
    std::vector<std::string>& warnings_;
};

}  // namespace

ExtractionOutcome extract_structured(std::string_view raw) {
    const std::string_view text = trim(raw);
    if (text.empty()) throw Error(ErrorCode::Unparseable, "model response is empty");

    if (auto obj = parse_object(text)) {
        return {ExtractionStrategy::DirectParse, std::string(text), std::move(*obj), {}};
    }
    if (auto block = first_fenced_block(text)) {
        if (auto obj = parse_object(*block)) {
            return {ExtractionStrategy::FencedBlock, std::string(*block), std::move(*obj), {}};
        }
    }
    if (auto found = first_balanced_object(text)) {
        return {ExtractionStrategy::BalancedBraceScan, std::string(found->first), std::move(found->second), {}};
    }
    std::size_t fields = 0;
    if (auto salvaged = salvage_key_values(text, fields)) {
        ExtractionOutcome out{ExtractionStrategy::KeyValueFallback, dump(*salvaged), std::move(*salvaged), {}};
        out.warnings.push_back("no JSON object found; salvaged " + std::to_string(fields) +
                               " key-value field(s) from text");
        return out;
    }
    throw Error(ErrorCode::Unparseable, "no structured content could be extracted from the model response");
}

CoercionResult coerce_response(const json& candidate, const ImageMeta& meta) {
    check(meta);
    if (!candidate.is_object()) {
        throw Error(ErrorCode::SchemaViolation, "analysis must be a JSON object", {{"paths", {"$"}}});
    }
    CoercionResult out;
    Coercer c(out.warnings);
    AnalysisResponse& r = out.response;
    r.image = meta;

    r.examination_type = c.text(c.member(candidate, {"examination_type", "exam_type", "examination", "study_type"}, ""),
                                "examination_type");
    r.anatomical_region =
        c.text(c.member(candidate, {"anatomical_region", "region", "anatomy", "body_region"}, ""), "anatomical_region");
    r.overall_impression =
        c.text(c.member(candidate, {"overall_impression", "impression", "summary"}, ""), "overall_impression");

    if (auto it = candidate.find("image"); it != candidate.end() && it->is_object()) {
        const auto w = it->find("width");
        const auto h = it->find("height");
        if (w != it->end() && h != it->end() && w->is_number() && h->is_number() &&
            (w->get<double>() != meta.width || h->get<double>() != meta.height)) {
            c.warn("image: reported dimensions differ from the decoded image; decoded dimensions kept");
        }
    }

    const json* list = c.member(candidate, {"findings", "abnormalities", "detections", "lesions"}, "");
    if (!list || !list->is_array()) {
        json paths = json::array({"findings"});
        throw Error(ErrorCode::SchemaViolation,
                    list ? "'findings' is not an array" : "response has no findings array", {{"paths", paths}});
    }

    for (std::size_t i = 0; i < list->size(); ++i) {
        const json& item = (*list)[i];
        const std::string path = "findings[" + std::to_string(i) + "]";
        if (!item.is_object()) {
            c.warn(path + ": not an object, skipped");
            continue;
        }
        const std::string p = path + ".";
        Finding f;
        f.id = static_cast<int>(r.findings.size()) + 1;
        if (auto id = item.find("id"); id != item.end() && !(id->is_number_integer() && id->get<long long>() == f.id)) {
            c.warn(path + ".id: renumbered to " + std::to_string(f.id));
        }
        f.label = c.text(c.member(item, {"label", "name", "type", "finding"}, p), p + "label");
        f.description = c.text(c.member(item, {"description", "details"}, p), p + "description");
        f.clinical_significance =
            c.text(c.member(item, {"clinical_significance", "significance"}, p), p + "clinical_significance");

        auto bbox = c.bbox(c.member(item, {"bbox", "bounding_box", "box"}, p), p + "bbox");
        auto center = c.point(c.member(item, {"center", "center_point", "centre"}, p), p + "center");
        if (auto ct = c.member(item, {"contour", "contour_points", "boundary"}, p)) f.contour = c.contour(ct, p + "contour");
        f.gaussian = c.gaussian(c.member(item, {"gaussian", "gaussian_params", "statistical_parameters", "statistics"}, p),
                                center, p + "gaussian");

        if (!bbox) {
            if (f.gaussian) {
                const auto& g = *f.gaussian;
                bbox = BoundingBox{g.mu_x - 2.0 * g.sigma_x, g.mu_y - 2.0 * g.sigma_y, g.mu_x + 2.0 * g.sigma_x,
                                   g.mu_y + 2.0 * g.sigma_y};
                c.warn(p + "bbox: missing, derived as mean +- 2 sigma");
            } else {
                bbox = BoundingBox{0.0, 0.0, static_cast<double>(meta.width - 1), static_cast<double>(meta.height - 1)};
                f.low_trust = true;
                c.warn(p + "bbox: SchemaViolation, no coordinates given; full-image box used and finding flagged low-trust");
            }
        }
        f.bbox = *bbox;
        if (!center) {
            center = f.gaussian ? Point{f.gaussian->mu_x, f.gaussian->mu_y} : f.bbox.midpoint();
            c.warn(p + "center: missing, defaulted to " + std::string(f.gaussian ? "gaussian mean" : "bbox midpoint"));
        }
        f.center = *center;

        if (auto lt = item.find("low_trust"); lt != item.end() && lt->is_boolean() && lt->get<bool>()) f.low_trust = true;

        auto conf = c.number(c.member(item, {"confidence", "confidence_score"}, p), p + "confidence");
        if (!conf) {
            f.confidence = 5;
            c.warn(p + "confidence: missing, defaulted to 5");
        } else {
            const double rounded = std::floor(*conf + 0.5);
            const double clamped = std::clamp(rounded, 1.0, 10.0);
            f.confidence = static_cast<int>(clamped);
            if (clamped != *conf) c.warn(p + "confidence: " + fmt(*conf) + " -> " + std::to_string(f.confidence));
        }
        r.findings.push_back(std::move(f));
    }
    return out;
}

CoercionResult parse_response(std::string_view raw, const ImageMeta& meta) {
    auto extracted = extract_structured(raw);
    auto result = coerce_response(extracted.value, meta);
    result.warnings.insert(result.warnings.begin(), extracted.warnings.begin(), extracted.warnings.end());
    return result;
}

}  // namespace gaussfind
