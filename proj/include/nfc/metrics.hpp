#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nfc/errors.hpp"
#include "nfc/image.hpp"

namespace nfc {

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    long pixel_count = 0;
};

inline constexpr double kPsnrCap = 100.0;

inline double psnr_from_mse(double mse) {
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

inline double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("psnr image size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        double d = a.rgb[i] - b.rgb[i];
        acc += d * d;
    }
    return psnr_from_mse(acc / double(a.rgb.size()));
}

// PSNR over the pixels selected by a per-pixel mask.
inline double psnr_masked(const Image& a, const Image& b, std::span<const uint8_t> mask) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("psnr image size mismatch");
    double acc = 0.0;
    long n = 0;
    for (size_t p = 0; p < a.pixel_count(); ++p) {
        if (!mask[p]) continue;
        for (int c = 0; c < 3; ++c) {
            double d = a.rgb[p * 3 + c] - b.rgb[p * 3 + c];
            acc += d * d;
        }
        ++n;
    }
    if (n == 0) throw ShapeError("psnr_masked: empty mask");
    return psnr_from_mse(acc / double(n * 3));
}

namespace detail {

inline std::vector<double> gaussian_window_11() {
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        double x = i - 5.0;
        w[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-mode Gaussian filter of a single channel.
inline std::vector<double> gauss_valid(const std::vector<double>& src, int w, int h) {
    static const std::vector<double> win = gaussian_window_11();
    const int vw = w - 10, vh = h - 10;
    std::vector<double> tmp(static_cast<size_t>(vw) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < vw; ++x) {
            double s = 0.0;
            for (int k = 0; k < 11; ++k) s += win[k] * src[static_cast<size_t>(y) * w + x + k];
            tmp[static_cast<size_t>(y) * vw + x] = s;
        }
    std::vector<double> out(static_cast<size_t>(vw) * vh, 0.0);
    for (int y = 0; y < vh; ++y)
        for (int x = 0; x < vw; ++x) {
            double s = 0.0;
            for (int k = 0; k < 11; ++k) s += win[k] * tmp[static_cast<size_t>(y + k) * vw + x];
            out[static_cast<size_t>(y) * vw + x] = s;
        }
    return out;
}

}  // namespace detail

// Mean structural similarity with the reference parameters: 11x11 Gaussian
// window (stdev 1.5), C1 = 0.01^2, C2 = 0.03^2 on unit dynamic range. The map
// is computed per channel over the valid region and averaged.
inline double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("ssim image size mismatch");
    if (a.width < 11 || a.height < 11)
        throw ShapeError("ssim requires images at least 11x11");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int w = a.width, h = a.height;
    const size_t n = a.pixel_count();
    double total = 0.0;
    long count = 0;
    std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
    for (int ch = 0; ch < 3; ++ch) {
        for (size_t p = 0; p < n; ++p) {
            double va = a.rgb[p * 3 + ch], vb = b.rgb[p * 3 + ch];
            xa[p] = va;
            xb[p] = vb;
            xaa[p] = va * va;
            xbb[p] = vb * vb;
            xab[p] = va * vb;
        }
        auto mu_a = detail::gauss_valid(xa, w, h);
        auto mu_b = detail::gauss_valid(xb, w, h);
        auto m_aa = detail::gauss_valid(xaa, w, h);
        auto m_bb = detail::gauss_valid(xbb, w, h);
        auto m_ab = detail::gauss_valid(xab, w, h);
        for (size_t i = 0; i < mu_a.size(); ++i) {
            double ma = mu_a[i], mb = mu_b[i];
            double va = m_aa[i] - ma * ma;
            double vb = m_bb[i] - mb * mb;
            double cov = m_ab[i] - ma * mb;
            double s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            ++count;
        }
    }
    return total / double(count);
}

inline MetricReport compare_images(const Image& a, const Image& b) {
    MetricReport r;
    r.psnr = psnr(a, b);
    r.ssim = ssim(a, b);
    r.pixel_count = static_cast<long>(a.pixel_count());
    return r;
}

}  // namespace nfc
