#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nfc/errors.hpp"
#include "nfc/tensor.hpp"

namespace nfc {

// Bits are stored least-significant place first, so index j (0-based) carries
// place value 2^j and lines up with the bit-wise loss weights. Display and
// serialization flip to most-significant-first.
struct BitLabel {
    std::array<uint8_t, 8> bits{};
};

struct BitProbability {
    std::array<double, 8> probs{};
};

// Place-value weight of bit j divided by 255; the eight weights sum to 1.
inline constexpr std::array<double, 8> kBitWeights = {
    1.0 / 255.0, 2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0, 16.0 / 255.0, 32.0 / 255.0, 64.0 / 255.0, 128.0 / 255.0};

inline BitLabel binary_encode(int value) {
    if (value < 0 || value > 255)
        throw DomainError("binary_encode: value " + std::to_string(value) + " outside [0,255]");
    BitLabel label;
    for (int j = 0; j < 8; ++j) label.bits[j] = static_cast<uint8_t>((value >> j) & 1);
    return label;
}

inline int binary_decode(const BitLabel& label) {
    int value = 0;
    for (int j = 0; j < 8; ++j) value += (label.bits[j] ? 1 : 0) << j;
    return value;
}

// (1/255) * sum_j 2^j * p_j; lies in [0,1] for probabilities in [0,1].
inline double probability_decode(const BitProbability& p) {
    double acc = 0.0;
    for (int j = 0; j < 8; ++j) acc += kBitWeights[j] * p.probs[j];
    return acc;
}

// Most-significant-first view for display / serialization.
inline std::array<uint8_t, 8> display_order(const BitLabel& label) {
    std::array<uint8_t, 8> out{};
    for (int j = 0; j < 8; ++j) out[j] = label.bits[7 - j];
    return out;
}

inline std::string display_string(const BitLabel& label) {
    std::string s = "[";
    auto d = display_order(label);
    for (int j = 0; j < 8; ++j) {
        s += d[j] ? '1' : '0';
        if (j < 7) s += ',';
    }
    s += ']';
    return s;
}

// Nearest integer label of a normalized color in [0,1].
inline int color_to_label(double c) {
    int v = static_cast<int>(std::lround(c * 255.0));
    return std::min(255, std::max(0, v));
}

// Sinusoidal positional encoding: optional copy of the input followed by
// sin(2^k pi p) and cos(2^k pi p) for k = 0..L-1, each over all components.
struct PosEncConfig {
    int frequencies = 10;
    bool include_input = true;

    int out_dim(int in_dim) const { return in_dim * ((include_input ? 1 : 0) + 2 * frequencies); }
};

inline void positional_encode(std::span<const double> p, const PosEncConfig& cfg, double* out) {
    const int d = static_cast<int>(p.size());
    int k = 0;
    if (cfg.include_input)
        for (int i = 0; i < d; ++i) out[k++] = p[i];
    double freq = M_PI;
    for (int f = 0; f < cfg.frequencies; ++f) {
        for (int i = 0; i < d; ++i) out[k++] = std::sin(freq * p[i]);
        for (int i = 0; i < d; ++i) out[k++] = std::cos(freq * p[i]);
        freq *= 2.0;
    }
}

inline std::vector<double> positional_encode(std::span<const double> p, const PosEncConfig& cfg) {
    std::vector<double> out(cfg.out_dim(static_cast<int>(p.size())));
    positional_encode(p, cfg, out.data());
    return out;
}

// Encodes a batch of points ([N, d] row-major) into a [N, out_dim] tensor.
inline Tensor positional_encode_batch(std::span<const double> points, int dim, const PosEncConfig& cfg) {
    const int n = static_cast<int>(points.size()) / dim;
    const int od = cfg.out_dim(dim);
    Tensor out = Tensor::zeros({n, od});
    for (int i = 0; i < n; ++i)
        positional_encode(points.subspan(static_cast<size_t>(i) * dim, dim), cfg,
                          out.data.data() + static_cast<size_t>(i) * od);
    return out;
}

// Per-channel bit labels of a batch of colors: [N, 3] in [0,1] -> [N, 24]
// with channel-major layout (R bits 0..7, G bits 0..7, B bits 0..7),
// least-significant place first within each channel.
inline Tensor encode_color_batch(std::span<const double> colors) {
    const int n = static_cast<int>(colors.size()) / 3;
    Tensor out = Tensor::zeros({n, 24});
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            BitLabel label = binary_encode(color_to_label(colors[static_cast<size_t>(i) * 3 + ch]));
            for (int j = 0; j < 8; ++j) out.data[static_cast<size_t>(i) * 24 + ch * 8 + j] = label.bits[j];
        }
    }
    return out;
}

// 24x3 matrix that decodes channel-major bit probabilities into RGB.
inline Tensor bit_decode_matrix() {
    Tensor m = Tensor::zeros({24, 3});
    for (int ch = 0; ch < 3; ++ch)
        for (int j = 0; j < 8; ++j) m.data[static_cast<size_t>(ch * 8 + j) * 3 + ch] = kBitWeights[j];
    return m;
}

// Plain (non-tape) decode of [N, 24] bit probabilities to [N, 3] colors.
inline void decode_bits_plain(std::span<const double> bits, std::span<double> colors) {
    const int n = static_cast<int>(bits.size()) / 24;
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            double acc = 0.0;
            for (int j = 0; j < 8; ++j) acc += kBitWeights[j] * bits[static_cast<size_t>(i) * 24 + ch * 8 + j];
            colors[static_cast<size_t>(i) * 3 + ch] = acc;
        }
    }
}

}  // namespace nfc
