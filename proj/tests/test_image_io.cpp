#include <catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nfc/image.hpp"
#include "nfc/random.hpp"

using namespace nfc;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

// Same fixed pattern as tests/golden/pattern4x4.ppm.
Image pattern4x4() {
    Image img(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            int k = x + 4 * y;
            img.at(x, y, 0) = 17 * k / 255.0;
            img.at(x, y, 1) = (255 - 17 * k) / 255.0;
            img.at(x, y, 2) = 85 * ((x + y) % 4) / 255.0;
        }
    return img;
}

}  // namespace

TEST_CASE("writer output matches the committed golden bytes") {
    std::string path = temp_path("nfc_pattern4x4.ppm");
    ppm_write(pattern4x4(), path);
    auto got = read_bytes(path);
    auto want = read_bytes(std::string(GOLDEN_DIR) + "/pattern4x4.ppm");
    REQUIRE(got == want);
    std::remove(path.c_str());
}

TEST_CASE("1x1 white image is the 11-byte header plus three 0xFF bytes") {
    Image img(1, 1);
    img.rgb = {1.0, 1.0, 1.0};
    std::string path = temp_path("nfc_white1x1.ppm");
    ppm_write(img, path);
    auto bytes = read_bytes(path);
    const std::string header = "P6\n1 1\n255\n";
    REQUIRE(bytes.size() == header.size() + 3);
    REQUIRE(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
    REQUIRE(bytes[header.size()] == 0xFF);
    REQUIRE(bytes[header.size() + 1] == 0xFF);
    REQUIRE(bytes[header.size() + 2] == 0xFF);
    std::remove(path.c_str());
}

TEST_CASE("write-read roundtrip stays within the quantization bound 1/510") {
    Rng rng(17);
    Image img(9, 7);
    for (double& v : img.rgb) v = rng.uniform();
    std::string path = temp_path("nfc_roundtrip.ppm");
    ppm_write(img, path);
    Image back = ppm_read(path);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (size_t i = 0; i < img.rgb.size(); ++i)
        REQUIRE(std::abs(back.rgb[i] - img.rgb[i]) <= 1.0 / 510.0 + 1e-12);
    std::remove(path.c_str());
}

TEST_CASE("reader rejects bad inputs") {
    SECTION("ASCII P3 is a format error") {
        std::string path = temp_path("nfc_p3.ppm");
        std::ofstream(path) << "P3\n1 1\n255\n255 255 255\n";
        REQUIRE_THROWS_AS(ppm_read(path), IoError);
        REQUIRE_THROWS_WITH(ppm_read(path), Catch::Matchers::ContainsSubstring("P3"));
        std::remove(path.c_str());
    }
    SECTION("truncated payload") {
        std::string path = temp_path("nfc_trunc.ppm");
        std::ofstream(path, std::ios::binary) << "P6\n2 2\n255\n" << "abc";
        REQUIRE_THROWS_AS(ppm_read(path), IoError);
        std::remove(path.c_str());
    }
    SECTION("wrong maxval") {
        std::string path = temp_path("nfc_maxval.ppm");
        std::ofstream(path, std::ios::binary) << "P6\n1 1\n65535\n" << "abcdef";
        REQUIRE_THROWS_AS(ppm_read(path), IoError);
        std::remove(path.c_str());
    }
    SECTION("missing file") { REQUIRE_THROWS_AS(ppm_read("/nonexistent/x.ppm"), IoError); }
}
