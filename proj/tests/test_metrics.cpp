#include <catch_amalgamated.hpp>
#include <cmath>

#include "nfc/datasets.hpp"
#include "nfc/metrics.hpp"
#include "nfc/random.hpp"

using namespace nfc;

TEST_CASE("psnr") {
    Image a = synthetic_image(16, 16);
    SECTION("identical images hit the 100 dB cap") { REQUIRE(psnr(a, a) == 100.0); }
    SECTION("uniform mse 0.01 gives exactly 20 dB") {
        Image g(16, 16);
        Image h(16, 16);
        for (size_t i = 0; i < g.rgb.size(); ++i) {
            g.rgb[i] = 0.5;
            h.rgb[i] = 0.6;
        }
        REQUIRE(psnr(g, h) == Catch::Approx(20.0).margin(1e-12));
    }
    SECTION("symmetry") {
        Image b = synthetic_image(16, 16);
        for (double& v : b.rgb) v = std::min(1.0, v + 0.07);
        REQUIRE(psnr(a, b) == psnr(b, a));
    }
    SECTION("strictly decreasing under growing noise") {
        Rng rng(3);
        double prev = 1e9;
        for (double std_dev : {0.02, 0.05, 0.1}) {
            Image noisy = a;
            Rng local(42);
            for (double& v : noisy.rgb) v = std::min(1.0, std::max(0.0, v + std_dev * local.gaussian()));
            double p = psnr(a, noisy);
            REQUIRE(p < prev);
            prev = p;
        }
    }
    SECTION("shape mismatch throws") { REQUIRE_THROWS_AS(psnr(a, Image(8, 8)), ShapeError); }
    SECTION("masked psnr uses only selected pixels") {
        Image b = a;
        std::vector<uint8_t> mask(a.pixel_count(), 0);
        mask[5] = 1;
        b.rgb[15] = a.rgb[15] + 0.1;  // pixel 5, channel 0
        double expect = -10.0 * std::log10(0.01 / 3.0);
        REQUIRE(psnr_masked(a, b, mask) == Catch::Approx(expect).margin(1e-9));
        // damage outside the mask is invisible
        b.rgb[0] = 0.0;
        REQUIRE(psnr_masked(a, b, mask) == Catch::Approx(expect).margin(1e-9));
    }
}

TEST_CASE("ssim") {
    Image a = synthetic_image(24, 24);
    SECTION("identical images give 1") { REQUIRE(ssim(a, a) == Catch::Approx(1.0).margin(1e-12)); }
    SECTION("binary checkerboard vs its inverse is negative") {
        Image c(16, 16), inv(16, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    double v = ((x + y) % 2 == 0) ? 1.0 : 0.0;
                    c.at(x, y, ch) = v;
                    inv.at(x, y, ch) = 1.0 - v;
                }
        REQUIRE(ssim(c, inv) < 0.0);
    }
    SECTION("contrast reduction lands strictly between 0 and 1 and decreases monotonically") {
        double prev = 1.0;
        for (double k : {0.75, 0.5, 0.25}) {
            Image b = a;
            for (double& v : b.rgb) v = k * v + (1.0 - k) * 0.5;
            double s = ssim(a, b);
            REQUIRE(s > 0.0);
            REQUIRE(s < 1.0);
            REQUIRE(s < prev);
            prev = s;
        }
    }
    SECTION("bounded by 1 in magnitude") {
        Rng rng(8);
        for (int rep = 0; rep < 5; ++rep) {
            Image x(12, 12), y(12, 12);
            for (double& v : x.rgb) v = rng.uniform();
            for (double& v : y.rgb) v = rng.uniform();
            double s = ssim(x, y);
            REQUIRE(std::abs(s) <= 1.0 + 1e-12);
        }
    }
    SECTION("images smaller than the window are rejected") {
        REQUIRE_THROWS_AS(ssim(Image(10, 16), Image(10, 16)), ShapeError);
    }
}
