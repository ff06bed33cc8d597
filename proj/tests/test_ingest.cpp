#include "gaussfind/digest.hpp"
#include "gaussfind/error.hpp"
#include "gaussfind/ingest.hpp"

#include "support.hpp"

#include <doctest.h>

#include <opencv2/imgcodecs.hpp>

#include <random>

using namespace gaussfind;

namespace {

std::vector<std::uint8_t> encode_with_opencv(const std::string& ext, const cv::Mat& bgr) {
    std::vector<std::uint8_t> out;
    REQUIRE(cv::imencode(ext, bgr, out));
    return out;
}

ErrorCode load_error(std::span<const std::uint8_t> bytes, const std::string& name) {
    try {
        load_image(bytes, name);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("PNG round trip keeps dimensions and RGB order") {
    RasterImage img = testing::solid_rgb(512, 512, {10, 20, 30});
    img.pixel(5, 7)[0] = 200;
    const auto loaded = load_image(encode_png(img), "scan.png");
    CHECK(loaded.meta.width == 512);
    CHECK(loaded.meta.height == 512);
    CHECK(loaded.meta.modality == Modality::Unknown);
    CHECK(loaded.meta.source_name == "scan.png");
    CHECK(loaded.image == img);
}

TEST_CASE("RGBA input is flattened to RGB") {
    RasterImage rgba = to_rgba(testing::solid_rgb(4, 3, {1, 2, 3}));
    const auto loaded = load_image(encode_png(rgba), "x.png");
    CHECK(loaded.image.channels == Channels::RGB);
    CHECK(loaded.image == testing::solid_rgb(4, 3, {1, 2, 3}));
}

TEST_CASE("JPEG and TIFF decode; grayscale becomes RGB") {
    cv::Mat gray(20, 30, CV_8UC1, cv::Scalar(128));
    const auto jpg = encode_with_opencv(".jpg", gray);
    CHECK(sniff_format(jpg) == ImageFormat::JPEG);
    const auto a = load_image(jpg, "knee_mr.jpg");
    CHECK(a.meta.width == 30);
    CHECK(a.meta.height == 20);
    CHECK(a.meta.modality == Modality::MRI);
    CHECK(a.image.channels == Channels::RGB);

    cv::Mat bgr(9, 11, CV_8UC3, cv::Scalar(1, 2, 3));
    const auto tif = encode_with_opencv(".tiff", bgr);
    CHECK(sniff_format(tif) == ImageFormat::TIFF);
    const auto b = load_image(tif, "slice.tif");
    CHECK(b.meta.width == 11);
    CHECK(b.image.pixel(0, 0)[0] == 3);  // BGR in, RGB out
    CHECK(b.image.pixel(0, 0)[2] == 1);
}

TEST_CASE("modality from name tokens") {
    CHECK(guess_modality("brain_mri_ax.png") == Modality::MRI);
    CHECK(guess_modality("CHEST-CT-001.jpg") == Modality::CT);
    CHECK(guess_modality("/data/us/liver_us.png") == Modality::Ultrasound);
    CHECK(guess_modality("hand x ray.png") == Modality::XRay);
    CHECK(guess_modality("hand_xray.png") == Modality::XRay);
    CHECK(guess_modality("patient_cr_2.png") == Modality::XRay);
    CHECK(guess_modality("abstract.png") == Modality::Unknown);  // substrings do not count
    CHECK(guess_modality("image.ct") == Modality::Unknown);      // extension is not a token
    CHECK(guess_modality("mri") == Modality::MRI);
}

TEST_CASE("typed errors for bad input") {
    CHECK(load_error({}, "a.png") == ErrorCode::EmptyInput);
    const std::string text = "GIF89a not supported";
    CHECK(load_error(as_bytes(text), "a.gif") == ErrorCode::UnsupportedFormat);
    CHECK(load_error(as_bytes(text), "a.png") == ErrorCode::CorruptImage);
}

TEST_CASE("truncated JPEG and PNG are corrupt with an offset") {
    cv::Mat img(64, 64, CV_8UC3, cv::Scalar(50, 100, 150));
    auto jpg = encode_with_opencv(".jpg", img);
    jpg.resize(jpg.size() / 2);
    CHECK(load_error(jpg, "a.jpg") == ErrorCode::CorruptImage);

    auto png = encode_png(testing::noise_rgb(64, 64, 3));
    const auto full = png.size();
    png.resize(full - 20);
    try {
        load_image(png, "a.png");
        FAIL("expected CorruptImage");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CorruptImage);
        CHECK(e.detail().contains("offset"));
    }

    auto flipped = encode_png(testing::noise_rgb(16, 16, 4));
    flipped[40] ^= 0xFF;
    CHECK(load_error(flipped, "a.png") == ErrorCode::CorruptImage);
}

TEST_CASE("load_image survives random bytes") {
    std::mt19937 rng(17);
    const auto png = encode_png(testing::noise_rgb(8, 8, 1));
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::uint8_t> bytes;
        if (i % 2 == 0) {
            bytes = png;
            for (int k = 0; k < 4; ++k) bytes[rng() % bytes.size()] = static_cast<std::uint8_t>(rng());
            bytes.resize(rng() % (bytes.size() + 1));
        } else {
            bytes.resize(rng() % 64);
            for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
            if (!bytes.empty() && i % 4 == 1) bytes[0] = 0xFF;
        }
        try {
            load_image(bytes, i % 3 ? "f.png" : "f.bin");
        } catch (const Error& e) {
            const bool typed = e.code() == ErrorCode::EmptyInput || e.code() == ErrorCode::UnsupportedFormat ||
                               e.code() == ErrorCode::CorruptImage;
            REQUIRE(typed);
        }
    }
}

TEST_CASE("preprocess is the identity when disabled") {
    const auto img = testing::noise_rgb(23, 17, 9);
    CHECK(preprocess(img, {}) == img);
}

TEST_CASE("contrast stretch on a constant image is a no-op") {
    const auto img = testing::solid_rgb(10, 10, {90, 90, 90});
    CHECK(preprocess(img, {.contrast_stretch = true}) == img);
}

TEST_CASE("contrast stretch maps p1 and p99 to the full range") {
    // 100 pixels, single channel value per pixel: 0..99 shifted to 50..149.
    RasterImage img(100, 1, Channels::RGB);
    for (int x = 0; x < 100; ++x) {
        for (int c = 0; c < 3; ++c) img.pixel(x, 0)[c] = static_cast<std::uint8_t>(50 + x);
    }
    const auto out = preprocess(img, {.contrast_stretch = true});
    // Nearest rank over 300 samples: p1 -> rank 3 -> value 50, p99 -> rank 297 -> value 148.
    CHECK(out.pixel(0, 0)[0] == 0);
    CHECK(out.pixel(98, 0)[0] == 255);
    CHECK(out.pixel(99, 0)[0] == 255);
    for (int x = 0; x < 100; ++x) {
        const double scaled = (x + 50 - 50) * 255.0 / (148 - 50);
        const int expected = std::min(255, static_cast<int>(scaled + 0.5));
        REQUIRE(out.pixel(x, 0)[1] == expected);
    }
    CHECK(out.pixel(49, 0)[0] == 128);  // 127.5 rounds up
}

TEST_CASE("median filter removes a salt pixel") {
    RasterImage img = testing::solid_rgb(5, 5, {40, 40, 40});
    img.pixel(2, 2)[0] = img.pixel(2, 2)[1] = img.pixel(2, 2)[2] = 255;
    const auto out = preprocess(img, {.median_filter = true});
    // Every 3x3 window holds at most one 255 among nine samples, so the median is 40.
    CHECK(out == testing::solid_rgb(5, 5, {40, 40, 40}));
    CHECK(out.width == 5);
    CHECK(out.channels == Channels::RGB);
}
