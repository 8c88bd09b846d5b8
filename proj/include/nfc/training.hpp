#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfc/datasets.hpp"
#include "nfc/errors.hpp"
#include "nfc/field_models.hpp"
#include "nfc/losses.hpp"
#include "nfc/metrics.hpp"
#include "nfc/rendering.hpp"

namespace nfc {

enum class TrainMode { nfr, nfc_bitwise, nfc_channelwise, nfc_no_encoding };

inline std::string mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::nfr: return "nfr";
        case TrainMode::nfc_bitwise: return "nfc-bitwise";
        case TrainMode::nfc_channelwise: return "nfc-channelwise";
        case TrainMode::nfc_no_encoding: return "nfc-no-encoding";
    }
    return "?";
}
inline TrainMode mode_from_name(const std::string& s) {
    if (s == "nfr") return TrainMode::nfr;
    if (s == "nfc-bitwise") return TrainMode::nfc_bitwise;
    if (s == "nfc-channelwise") return TrainMode::nfc_channelwise;
    if (s == "nfc-no-encoding") return TrainMode::nfc_no_encoding;
    throw ConfigError("unknown train mode '" + s + "'");
}

// Modes with target encoding need the 24-logit head; the others keep 3.
inline HeadType head_for_mode(TrainMode m) {
    return (m == TrainMode::nfc_bitwise || m == TrainMode::nfc_channelwise) ? HeadType::classifier24
                                                                            : HeadType::regressor3;
}

inline LossMode loss_mode_for(TrainMode m) {
    switch (m) {
        case TrainMode::nfr: return LossMode::regression;
        case TrainMode::nfc_bitwise: return LossMode::bitwise;
        default: return LossMode::channelwise;
    }
}

struct TrainConfig {
    TrainMode mode = TrainMode::nfc_channelwise;
    double lambda = 5.0;
    long iterations = 5000;
    int batch_size = 1024;
    double learning_rate = 5e-4;
    double decay_horizon = 0.0;  // 0 -> 2.5x iterations (see lr_schedule)
    long eval_interval = 250;
    uint64_t seed = 1;
    int n_samples = 32;  // per-ray samples, radiance fields only

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
        if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"mode", mode_name(mode)},       {"lambda", lambda},
                {"iterations", iterations},      {"batch_size", batch_size},
                {"learning_rate", learning_rate}, {"decay_horizon", decay_horizon},
                {"eval_interval", eval_interval}, {"seed", seed},
                {"n_samples", n_samples}};
    }
    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.mode = mode_from_name(j.at("mode").get<std::string>());
        c.lambda = j.value("lambda", 5.0);
        c.iterations = j.value("iterations", 5000L);
        c.batch_size = j.value("batch_size", 1024);
        c.learning_rate = j.value("learning_rate", 5e-4);
        c.decay_horizon = j.value("decay_horizon", 0.0);
        c.eval_interval = j.value("eval_interval", 250L);
        c.seed = j.value("seed", uint64_t(1));
        c.n_samples = j.value("n_samples", 32);
        c.validate();
        return c;
    }

    LossConfig loss_config() const {
        LossConfig lc;
        lc.lambda = lambda;
        lc.mode = loss_mode_for(mode);
        return lc;
    }
    double effective_lambda() const { return mode == TrainMode::nfr ? 0.0 : lambda; }
};

// Exponential decay matching the 0.1^(iter/horizon) scheduler shape; the
// default horizon of 2.5x the run length reaches the same end-of-run decay
// factor as the reference schedule (0.1^(200k/500k)).
inline double lr_schedule(const TrainConfig& cfg, long iter) {
    double horizon = cfg.decay_horizon > 0.0 ? cfg.decay_horizon : 2.5 * double(cfg.iterations);
    return cfg.learning_rate * std::pow(0.1, double(iter) / horizon);
}

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;
    std::vector<Tensor> m, v;
    long step = 0;

    static AdamState like(const std::vector<Tensor>& params) {
        AdamState s;
        for (const Tensor& p : params) {
            s.m.push_back(Tensor::zeros(p.shape));
            s.v.push_back(Tensor::zeros(p.shape));
        }
        return s;
    }
};

// Bias-corrected Adam update. grads entries may be empty (treated as zero).
inline void adam_step(std::vector<Tensor>& params, const std::vector<const Tensor*>& grads, AdamState& state,
                      double lr) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads size mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(AdamState::beta1, double(state.step));
    const double c2 = 1.0 - std::pow(AdamState::beta2, double(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        if (!grads[i] || grads[i]->data.empty()) continue;
        if (!same_shape(params[i].shape, grads[i]->shape))
            throw ShapeError("adam_step: grad shape " + shape_str(grads[i]->shape) + " vs param " +
                             shape_str(params[i].shape));
        double* p = params[i].data.data();
        double* m = state.m[i].data.data();
        double* v = state.v[i].data.data();
        const double* g = grads[i]->data.data();
        const size_t n = params[i].data.size();
        for (size_t k = 0; k < n; ++k) {
            m[k] = AdamState::beta1 * m[k] + (1.0 - AdamState::beta1) * g[k];
            v[k] = AdamState::beta2 * v[k] + (1.0 - AdamState::beta2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + AdamState::eps);
        }
    }
}

struct LogRecord {
    long iteration = 0;
    double mse = 0.0;
    double cls = 0.0;
    double total = 0.0;
    double train_psnr = 0.0;
    double test_psnr = 0.0;
    double seconds = 0.0;

    nlohmann::json to_json() const {
        return {{"iteration", iteration}, {"mse", mse},
                {"cls", cls},             {"total", total},
                {"train_psnr", train_psnr}, {"test_psnr", test_psnr},
                {"seconds", seconds}};
    }
};

struct TrainResult {
    std::vector<LogRecord> logs;
};

namespace detail {

// Diagnoses a NaN/Inf loss by naming the first non-finite tensor on the tape.
inline void abort_on_non_finite(const Tape& tape, double loss, long iteration) {
    if (std::isfinite(loss)) return;
    for (size_t id = 0; id < tape.size(); ++id) {
        if (!tape.node(static_cast<int>(id)).val.all_finite())
            throw NumericalError("non-finite loss at iteration " + std::to_string(iteration) +
                                 "; first bad tensor: node " + std::to_string(id) + " (op " +
                                 op_name(tape.node(static_cast<int>(id)).op) + ")");
    }
    throw NumericalError("non-finite loss at iteration " + std::to_string(iteration));
}

inline std::vector<const Tensor*> param_grads(const std::vector<Tensor>& grads, const TapeField& field) {
    std::vector<const Tensor*> out;
    out.reserve(field.param_leaves.size());
    for (const Value& leaf : field.param_leaves) out.push_back(&grads[leaf.id()]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 2D image-field training: each step samples supervised pixels uniformly with
// replacement and fits the field to their (possibly corrupted) colors.

inline TrainResult train_image_field(FieldModel& model, const Image2dDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (model.spec.head != head_for_mode(cfg.mode))
        throw ConfigError("model head " + head_name(model.spec.head) + " incompatible with mode " +
                          mode_name(cfg.mode));
    if (model.spec.pos_dim != 2 || model.spec.density_branch)
        throw ConfigError("train_image_field requires a 2D image-field model");
    const std::vector<int> train_pixels = ds.pixels_with_role(0);
    if (train_pixels.empty()) throw ConfigError("no supervised pixels to train on");
    const std::vector<uint8_t> train_mask = ds.mask_of(0);
    const std::vector<uint8_t> test_mask = ds.mask_of(1);
    const int w = ds.target.width, h = ds.target.height;
    const LossConfig loss_cfg = cfg.loss_config();
    loss_cfg.validate();

    AdamState adam = AdamState::like(model.params);
    Rng batch_rng(cfg.seed, 0xba7cull);
    TrainResult result;
    const auto t0 = std::chrono::steady_clock::now();

    const int b = cfg.batch_size;
    std::vector<double> coords(static_cast<size_t>(b) * 2);
    std::vector<double> targets(static_cast<size_t>(b) * 3);
    for (long iter = 0; iter < cfg.iterations; ++iter) {
        for (int i = 0; i < b; ++i) {
            int p = train_pixels[batch_rng.uniform_int(train_pixels.size())];
            coords[static_cast<size_t>(i) * 2] = (p % w + 0.5) / w;
            coords[static_cast<size_t>(i) * 2 + 1] = (p / w + 0.5) / h;
            for (int c = 0; c < 3; ++c) targets[static_cast<size_t>(i) * 3 + c] = ds.target.rgb[static_cast<size_t>(p) * 3 + c];
        }
        Tensor enc = positional_encode_batch(coords, 2, model.spec.pos_enc);
        Tensor target_colors({b, 3}, targets);
        Tensor target_bits = encode_color_batch(targets);

        Tape tape;
        TapeField field = forward_tape(tape, model, enc, nullptr);
        Value bits = field.bits.tape() ? field.bits : field.colors;
        LossBundle loss = nfc_loss(tape, field.colors, bits, target_colors, target_bits, loss_cfg);
        detail::abort_on_non_finite(tape, loss.total.scalar_value(), iter);
        std::vector<Tensor> grads = tape.backward(loss.total);
        adam_step(model.params, detail::param_grads(grads, field), adam, lr_schedule(cfg, iter));

        const long it1 = iter + 1;
        if (it1 % cfg.eval_interval == 0 || it1 == cfg.iterations) {
            Image render = render_image_field(model, w, h);
            LogRecord rec;
            rec.iteration = it1;
            rec.mse = loss.mse.scalar_value();
            rec.cls = loss.cls.scalar_value();
            rec.total = loss.total.scalar_value();
            rec.train_psnr = psnr_masked(render, ds.target, train_mask);
            rec.test_psnr = psnr_masked(render, ds.clean, test_mask);
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            result.logs.push_back(rec);
        }
    }
    model.iteration += cfg.iterations;
    return result;
}

// ---------------------------------------------------------------------------
// 3D radiance-field training: each step samples train-view rays with
// replacement, draws fresh stratified depths, and fits composited colors.

inline TrainResult train_radiance_field(FieldModel& model, const SceneDataset& ds, const TrainConfig& cfg,
                                        const RenderConfig& render_cfg) {
    cfg.validate();
    if (model.spec.head != head_for_mode(cfg.mode))
        throw ConfigError("model head " + head_name(model.spec.head) + " incompatible with mode " +
                          mode_name(cfg.mode));
    if (model.spec.pos_dim != 3 || !model.spec.density_branch)
        throw ConfigError("train_radiance_field requires a 3D radiance-field model");
    const std::vector<int> train_views = ds.view_indices(ViewRole::train);
    const std::vector<int> test_views = ds.view_indices(ViewRole::test);
    if (train_views.empty()) throw ConfigError("no training views");
    const int w = ds.views[train_views[0]].camera.width;
    const int h = ds.views[train_views[0]].camera.height;
    const size_t pixels_per_view = static_cast<size_t>(w) * h;
    const LossConfig loss_cfg = cfg.loss_config();
    loss_cfg.validate();
    const bool classifier = model.spec.head == HeadType::classifier24;
    const int k = classifier ? 24 : 3;
    const std::vector<double> bg =
        classifier ? background_bits(render_cfg.background)
                   : std::vector<double>(render_cfg.background.begin(), render_cfg.background.end());

    // Fixed evaluation subsets: every test view, first two train views.
    std::vector<int> eval_train(train_views.begin(),
                                train_views.begin() + std::min<size_t>(2, train_views.size()));

    AdamState adam = AdamState::like(model.params);
    Rng batch_rng(cfg.seed, 0xba7cull);
    TrainResult result;
    const auto t0 = std::chrono::steady_clock::now();

    const int b = cfg.batch_size;
    const int ns = cfg.n_samples;
    const size_t pts = static_cast<size_t>(b) * ns;
    std::vector<double> positions(pts * 3), dirs(pts * 3), targets(static_cast<size_t>(b) * 3);
    const Tensor decode_m = bit_decode_matrix();

    for (long iter = 0; iter < cfg.iterations; ++iter) {
        Rng depth_rng(cfg.seed, 0xdeb700ull + static_cast<uint64_t>(iter));
        Tensor deltas = Tensor::zeros({b, ns});
        for (int i = 0; i < b; ++i) {
            const size_t draw = batch_rng.uniform_int(train_views.size() * pixels_per_view);
            const int view_idx = train_views[draw / pixels_per_view];
            const int pixel = static_cast<int>(draw % pixels_per_view);
            const View& view = ds.views[view_idx];
            Ray ray = pixel_ray(view.camera, pixel, view.t_near, view.t_far);
            RaySamples samples = stratified_sample(ray, ns, depth_rng);
            for (int s = 0; s < ns; ++s) {
                Vec3 p = ray.origin + samples.ts[s] * ray.direction;
                const size_t off = (static_cast<size_t>(i) * ns + s) * 3;
                positions[off] = p.x();
                positions[off + 1] = p.y();
                positions[off + 2] = p.z();
                dirs[off] = ray.direction.x();
                dirs[off + 1] = ray.direction.y();
                dirs[off + 2] = ray.direction.z();
                deltas.data[static_cast<size_t>(i) * ns + s] = samples.deltas[s];
            }
            for (int c = 0; c < 3; ++c) targets[static_cast<size_t>(i) * 3 + c] = view.image.rgb[static_cast<size_t>(ray.pixel) * 3 + c];
        }
        Tensor enc_pos = positional_encode_batch(positions, 3, model.spec.pos_enc);
        Tensor enc_dir;
        if (model.spec.use_direction) enc_dir = positional_encode_batch(dirs, 3, model.spec.dir_enc);
        Tensor target_colors({b, 3}, targets);
        Tensor target_bits = encode_color_batch(targets);

        Tape tape;
        TapeField field = forward_tape(tape, model, enc_pos, model.spec.use_direction ? &enc_dir : nullptr);
        Value points = classifier ? field.bits : field.colors;
        TapeComposite comp = composite_tape(tape, field.sigma, points, deltas, bg, b, ns);
        Value pred_bits = comp.color;  // [b,24] for classifier, [b,3] otherwise
        Value pred_colors = classifier ? tape.matmul(comp.color, tape.leaf(decode_m)) : comp.color;
        LossBundle loss = nfc_loss(tape, pred_colors, pred_bits, target_colors, target_bits, loss_cfg);
        detail::abort_on_non_finite(tape, loss.total.scalar_value(), iter);
        std::vector<Tensor> grads = tape.backward(loss.total);
        adam_step(model.params, detail::param_grads(grads, field), adam, lr_schedule(cfg, iter));

        const long it1 = iter + 1;
        if (it1 % cfg.eval_interval == 0 || it1 == cfg.iterations) {
            LogRecord rec;
            rec.iteration = it1;
            rec.mse = loss.mse.scalar_value();
            rec.cls = loss.cls.scalar_value();
            rec.total = loss.total.scalar_value();
            const int threads = eval_threads();
            auto mean_psnr = [&](const std::vector<int>& idx) {
                if (idx.empty()) return 0.0;
                double acc = 0.0;
                for (int vi : idx) {
                    RenderConfig rc = render_cfg;
                    rc.t_near = ds.views[vi].t_near;
                    rc.t_far = ds.views[vi].t_far;
                    Image img = render_image(model, ds.views[vi].camera, rc, threads);
                    acc += psnr(img, ds.views[vi].image);
                }
                return acc / double(idx.size());
            };
            rec.train_psnr = mean_psnr(eval_train);
            rec.test_psnr = mean_psnr(test_views);
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            result.logs.push_back(rec);
        }
    }
    model.iteration += cfg.iterations;
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalResult {
    std::vector<MetricReport> per_view;
    MetricReport mean;
};

inline EvalResult finalize_eval(EvalResult r) {
    if (r.per_view.empty()) throw ConfigError("evaluate: empty split");
    for (const MetricReport& m : r.per_view) {
        r.mean.psnr += m.psnr;
        r.mean.ssim += m.ssim;
        r.mean.pixel_count += m.pixel_count;
    }
    r.mean.psnr /= double(r.per_view.size());
    r.mean.ssim /= double(r.per_view.size());
    return r;
}

inline EvalResult evaluate_scene(const FieldModel& model, const SceneDataset& ds, ViewRole role,
                                 const RenderConfig& render_cfg, int threads = 1) {
    EvalResult r;
    for (const View& v : ds.views) {
        if (v.role != role) continue;
        RenderConfig rc = render_cfg;
        rc.t_near = v.t_near;
        rc.t_far = v.t_far;
        Image img = render_image(model, v.camera, rc, threads);
        r.per_view.push_back(compare_images(img, v.image));
    }
    return finalize_eval(r);
}

// For the 2D task the "views" are the pixel splits of a single image: PSNR is
// masked to the split, SSIM is computed on the full rendered image against
// the clean target.
inline EvalResult evaluate_image(const FieldModel& model, const Image2dDataset& ds, uint8_t role) {
    EvalResult r;
    Image render = render_image_field(model, ds.target.width, ds.target.height);
    std::vector<uint8_t> mask = ds.mask_of(role);
    long count = 0;
    for (uint8_t m : mask) count += m;
    if (count == 0) throw ConfigError("evaluate: empty split");
    MetricReport rep;
    rep.psnr = psnr_masked(render, role == 0 ? ds.target : ds.clean, mask);
    rep.ssim = ssim(render, ds.clean);
    rep.pixel_count = count;
    r.per_view.push_back(rep);
    return finalize_eval(r);
}

}  // namespace nfc
