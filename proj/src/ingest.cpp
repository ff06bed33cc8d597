#include "gaussfind/ingest.hpp"

#include "gaussfind/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/core/utils/logger.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

namespace gaussfind {

namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

void silence_opencv() {
    static const bool once = [] {
        cv::utils::logging::setLogLevel(cv::utils::logging::LOG_LEVEL_SILENT);
        return true;
    }();
    (void)once;
}

[[noreturn]] void corrupt(const std::string& what, std::size_t offset) {
    throw Error(ErrorCode::CorruptImage, what + " (at byte " + std::to_string(offset) + ")", {{"offset", offset}});
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

// Walks the chunk list so truncation and bit rot are reported with an offset
// instead of whatever the decoder makes of them.
void check_png_structure(std::span<const std::uint8_t> bytes) {
    std::size_t off = kPngSignature.size();
    bool first = true;
    while (true) {
        if (off + 12 > bytes.size()) corrupt("PNG truncated inside chunk header", off);
        const std::uint32_t len = be32(bytes, off);
        if (len > 0x7FFFFFFFu || off + 12 + std::size_t{len} > bytes.size()) {
            corrupt("PNG chunk extends past end of data", off);
        }
        const auto type = bytes.subspan(off + 4, 4);
        const bool is_ihdr = std::memcmp(type.data(), "IHDR", 4) == 0;
        if (first && !is_ihdr) corrupt("PNG does not start with IHDR", off);
        const auto crc_expected = be32(bytes, off + 8 + len);
        const auto crc = static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), bytes.data() + off + 4, len + 4));
        if (crc != crc_expected) corrupt("PNG chunk CRC mismatch", off);
        if (std::memcmp(type.data(), "IEND", 4) == 0) return;
        off += 12 + std::size_t{len};
        first = false;
    }
}

void check_jpeg_structure(std::span<const std::uint8_t> bytes) {
    // EOI marker must be present; anything after it is ignored.
    for (std::size_t i = bytes.size(); i >= 2; --i) {
        if (bytes[i - 2] == 0xFF && bytes[i - 1] == 0xD9) return;
    }
    corrupt("JPEG has no end-of-image marker (truncated)", bytes.size());
}

std::string lower_extension(std::string_view name) {
    const auto dot = name.rfind('.');
    if (dot == std::string_view::npos) return {};
    std::string ext(name.substr(dot + 1));
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

std::string base_name(std::string_view name) {
    const auto slash = name.find_last_of("/\\");
    return std::string(slash == std::string_view::npos ? name : name.substr(slash + 1));
}

}  // namespace

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 8 && std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
        return ImageFormat::PNG;
    }
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return ImageFormat::JPEG;
    if (bytes.size() >= 4 && ((bytes[0] == 'I' && bytes[1] == 'I' && bytes[2] == 42 && bytes[3] == 0) ||
                              (bytes[0] == 'M' && bytes[1] == 'M' && bytes[2] == 0 && bytes[3] == 42))) {
        return ImageFormat::TIFF;
    }
    return ImageFormat::Unknown;
}

Modality guess_modality(std::string_view name_hint) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : base_name(name_hint)) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    // the extension is not a token
    if (name_hint.find('.') != std::string_view::npos && !tokens.empty()) tokens.pop_back();

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (t == "x" && i + 1 < tokens.size() && tokens[i + 1] == "ray") return Modality::XRay;
        if (t == "ct") return Modality::CT;
        if (t == "mri" || t == "mr") return Modality::MRI;
        if (t == "xray" || t == "cr") return Modality::XRay;
        if (t == "us" || t == "ultrasound") return Modality::Ultrasound;
    }
    return Modality::Unknown;
}

LoadedImage load_image(std::span<const std::uint8_t> bytes, std::string_view name_hint) {
    if (bytes.empty()) throw Error(ErrorCode::EmptyInput, "image data is empty");
    silence_opencv();

    const ImageFormat format = sniff_format(bytes);
    switch (format) {
        case ImageFormat::PNG: check_png_structure(bytes); break;
        case ImageFormat::JPEG: check_jpeg_structure(bytes); break;
        case ImageFormat::TIFF: break;
        case ImageFormat::Unknown: {
            const std::string ext = lower_extension(name_hint);
            if (ext == "png" || ext == "jpg" || ext == "jpeg" || ext == "tif" || ext == "tiff") {
                corrupt("file named ." + ext + " does not carry a valid signature", 0);
            }
            throw Error(ErrorCode::UnsupportedFormat, "unrecognized image format (supported: PNG, JPEG, TIFF)");
        }
    }

    cv::Mat decoded;
    try {
        const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
        decoded = cv::imdecode(buffer, cv::IMREAD_COLOR);
    } catch (const cv::Exception&) {
        decoded.release();
    }
    if (decoded.empty() || decoded.type() != CV_8UC3) corrupt("image data could not be decoded", 0);

    cv::Mat rgb;
    cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
    LoadedImage out;
    out.image = RasterImage(rgb.cols, rgb.rows, Channels::RGB);
    for (int y = 0; y < rgb.rows; ++y) {
        std::memcpy(out.image.pixel(0, y), rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3);
    }
    out.meta.width = rgb.cols;
    out.meta.height = rgb.rows;
    out.meta.modality = guess_modality(name_hint);
    out.meta.source_name = base_name(name_hint);
    return out;
}

RasterImage preprocess(const RasterImage& img, const PreprocessOptions& opts) {
    RasterImage out = img;
    if (opts.contrast_stretch && !out.data.empty()) {
        std::array<std::size_t, 256> hist{};
        for (auto v : out.data) ++hist[v];
        const std::size_t n = out.data.size();
        // nearest-rank percentiles
        const auto percentile = [&](double p) {
            const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p * static_cast<double>(n))));
            std::size_t cum = 0;
            for (int v = 0; v < 256; ++v) {
                cum += hist[v];
                if (cum >= rank) return v;
            }
            return 255;
        };
        const int lo = percentile(0.01);
        const int hi = percentile(0.99);
        if (hi > lo) {
            std::array<std::uint8_t, 256> lut{};
            for (int v = 0; v < 256; ++v) {
                const double s = std::floor((v - lo) * 255.0 / (hi - lo) + 0.5);
                lut[v] = static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
            }
            for (auto& v : out.data) v = lut[v];
        }
    }
    if (opts.median_filter && out.width > 0 && out.height > 0) {
        const int type = out.channels == Channels::RGB ? CV_8UC3 : CV_8UC4;
        const cv::Mat src(out.height, out.width, type, out.data.data());
        cv::Mat dst;
        cv::medianBlur(src, dst, 3);
        for (int y = 0; y < out.height; ++y) {
            std::memcpy(out.pixel(0, y), dst.ptr<std::uint8_t>(y), static_cast<std::size_t>(out.width) * out.channel_count());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

RasterImage to_rgba(const RasterImage& img) {
    if (img.channels == Channels::RGBA) return img;
    RasterImage out(img.width, img.height, Channels::RGBA);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        out.data[i * 4 + 0] = img.data[i * 3 + 0];
        out.data[i * 4 + 1] = img.data[i * 3 + 1];
        out.data[i * 4 + 2] = img.data[i * 3 + 2];
        out.data[i * 4 + 3] = 255;
    }
    return out;
}

RasterImage to_rgb(const RasterImage& img) {
    if (img.channels == Channels::RGB) return img;
    RasterImage out(img.width, img.height, Channels::RGB);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(&out.data[i * 3], &img.data[i * 4], 3);
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    silence_opencv();
    const bool rgba = img.channels == Channels::RGBA;
    const cv::Mat src(img.height, img.width, rgba ? CV_8UC4 : CV_8UC3, const_cast<std::uint8_t*>(img.data.data()));
    cv::Mat bgr;
    cv::cvtColor(src, bgr, rgba ? cv::COLOR_RGBA2BGRA : cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> out;
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6, cv::IMWRITE_PNG_STRATEGY,
                                  cv::IMWRITE_PNG_STRATEGY_DEFAULT};
    if (!cv::imencode(".png", bgr, out, params)) throw Error(ErrorCode::IoError, "PNG encoding failed");
    return out;
}

}  // namespace gaussfind
