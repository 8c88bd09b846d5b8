#pragma once

#include <string>

#include "nfc/encoding.hpp"
#include "nfc/errors.hpp"
#include "nfc/tensor.hpp"

namespace nfc {

enum class LossMode { regression, bitwise, channelwise };

struct LossConfig {
    double lambda = 5.0;
    double epsilon = 1e-3;      // upper clamp margin: predictions capped at 1 - epsilon
    double epsilon_low = 1e-7;  // lower clamp keeping log away from 0
    LossMode mode = LossMode::channelwise;

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < 0.5))
            throw ConfigError("loss epsilon must be in (0, 0.5), got " + std::to_string(epsilon));
        if (!(epsilon_low > 0.0 && epsilon_low < epsilon))
            throw ConfigError("loss epsilon_low must be in (0, epsilon), got " + std::to_string(epsilon_low));
        if (lambda < 0.0) throw ConfigError("loss lambda must be >= 0, got " + std::to_string(lambda));
    }
};

// Elementwise -[t ln p + (1-t) ln(1-p)] with a soft target t in [0,1].
// Caller is responsible for clamping p into the open interval first.
inline Value bce_elementwise(Tape& t, Value p, Value target) {
    Value log_p = t.log(p);
    Value log_1p = t.log(t.one_minus(p));
    Value pos = t.mul(target, log_p);
    Value neg_term = t.mul(t.one_minus(target), log_1p);
    return t.neg(t.add(pos, neg_term));
}

// Mean over rays of the squared l2 norm of (pred - target): the per-ray sum
// over channels is kept, the batch dimension is averaged.
inline Value mse_loss(Tape& t, Value pred, Value target) {
    if (!same_shape(pred.shape(), target.shape()))
        throw ShapeError("mse_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const int rays = pred.val().rows();
    Value diff = t.sub(pred, target);
    return t.scale(t.sum(t.mul(diff, diff)), 1.0 / double(rays));
}

inline Value mse_loss(Tape& t, Value pred, const Tensor& target) { return mse_loss(t, pred, t.leaf(target)); }

// Bit-wise classification loss: per channel (1/255) sum_j 2^(j-1) BCE over
// the 8 bits, averaged over channels and rays. pred_bits and target_bits are
// [N, 24] channel-major, least-significant place first.
inline Value bitwise_cls_loss(Tape& t, Value pred_bits, const Tensor& target_bits, const LossConfig& cfg) {
    if (!same_shape(pred_bits.shape(), target_bits.shape))
        throw ShapeError("bitwise_cls_loss shape mismatch: " + shape_str(pred_bits.shape()) + " vs " +
                         shape_str(target_bits.shape));
    const int rays = pred_bits.val().rows();
    const int channels = pred_bits.val().cols() / 8;
    Value p = t.clamp_upper(t.clamp_lower(pred_bits, cfg.epsilon_low), 1.0 - cfg.epsilon_low);
    Value bce = bce_elementwise(t, p, t.leaf(target_bits));
    Tensor w = Tensor::zeros({1, channels * 8});
    for (int ch = 0; ch < channels; ++ch)
        for (int j = 0; j < 8; ++j) w.data[static_cast<size_t>(ch) * 8 + j] = kBitWeights[j];
    Value weighted = t.mul(bce, t.leaf(w));
    return t.scale(t.sum(weighted), 1.0 / (double(rays) * channels));
}

// Channel-wise classification loss: BCE between the decoded color prediction,
// clamped into [epsilon_low, 1 - epsilon], and the ground-truth color used as
// a probabilistic soft label. Mean over rays and channels.
inline Value channelwise_cls_loss(Tape& t, Value pred_color, const Tensor& target, const LossConfig& cfg) {
    if (!same_shape(pred_color.shape(), target.shape))
        throw ShapeError("channelwise_cls_loss shape mismatch: " + shape_str(pred_color.shape()) + " vs " +
                         shape_str(target.shape));
    Value clamped = t.clamp_upper(t.clamp_lower(pred_color, cfg.epsilon_low), 1.0 - cfg.epsilon);
    return t.mean(bce_elementwise(t, clamped, t.leaf(target)));
}

struct LossBundle {
    Value total;
    Value mse;
    Value cls;
};

// Combined objective: MSE plus lambda times the classification term. The MSE
// branch bypasses the clamp, so its gradient survives where the clamp zeroes
// the classification gradient.
//
// pred_color: [N,3] decoded colors. pred_bits: [N,24] bit probabilities
// (needed for bitwise mode only; pass pred_color again otherwise).
inline LossBundle nfc_loss(Tape& t, Value pred_color, Value pred_bits, const Tensor& target,
                           const Tensor& target_bits, const LossConfig& cfg) {
    LossBundle out;
    out.mse = mse_loss(t, pred_color, target);
    if (cfg.mode == LossMode::bitwise)
        out.cls = bitwise_cls_loss(t, pred_bits, target_bits, cfg);
    else
        out.cls = channelwise_cls_loss(t, pred_color, target, cfg);
    double lambda = cfg.mode == LossMode::regression ? 0.0 : cfg.lambda;
    out.total = t.add(out.mse, t.scale(out.cls, lambda));
    return out;
}

}  // namespace nfc
