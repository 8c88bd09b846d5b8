#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfc/datasets.hpp"
#include "nfc/errors.hpp"
#include "nfc/field_models.hpp"
#include "nfc/image.hpp"
#include "nfc/metrics.hpp"
#include "nfc/rendering.hpp"
#include "nfc/training.hpp"

namespace nfc {

using nlohmann::json;

inline json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

namespace detail {
inline const json& require_key(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError("missing required config key '" + where + key + "'");
    return j.at(key);
}
}  // namespace detail

// Full experiment description; see configs/ for examples.
struct ExperimentConfig {
    std::string task;  // "image2d" | "scene3d"
    std::string output_dir;

    // image2d sources (first non-empty wins)
    std::string image_path;
    int synth_width = 64, synth_height = 64;

    // scene3d sources
    std::string dataset_dir;  // load a make-data directory
    SceneSpec scene = default_two_sphere_scene();
    RigSpec rig;
    int oracle_samples = 512;

    TrainConfig train;
    std::vector<int> hidden{128, 128, 128, 128};
    int pos_frequencies = 10;
    int dir_frequencies = 4;
    bool use_direction = true;

    RenderConfig render;

    double noise_std = 0.0;
    double keep_fraction = 1.0;
    uint64_t data_seed = 1000;

    json raw;  // config as loaded, echoed into outputs

    static ExperimentConfig load(const std::string& path) { return from_json(read_json_file(path)); }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig cfg;
        cfg.raw = j;
        cfg.task = detail::require_key(j, "task", "").get<std::string>();
        if (cfg.task != "image2d" && cfg.task != "scene3d")
            throw ConfigError("task must be 'image2d' or 'scene3d', got '" + cfg.task + "'");
        cfg.output_dir = detail::require_key(j, "output_dir", "").get<std::string>();
        const json& ds = detail::require_key(j, "dataset", "");
        if (cfg.task == "image2d") {
            cfg.image_path = ds.value("image_path", "");
            if (ds.contains("synthetic")) {
                cfg.synth_width = ds.at("synthetic").value("width", 64);
                cfg.synth_height = ds.at("synthetic").value("height", 64);
            }
        } else {
            cfg.dataset_dir = ds.value("path", "");
            if (ds.contains("scene")) {
                if (ds.at("scene").is_string()) {
                    if (ds.at("scene").get<std::string>() != "two-spheres")
                        throw ConfigError("unknown built-in scene '" + ds.at("scene").get<std::string>() + "'");
                } else {
                    cfg.scene = SceneSpec::from_json(ds.at("scene"));
                }
            }
            if (ds.contains("rig")) cfg.rig = RigSpec::from_json(ds.at("rig"));
            cfg.oracle_samples = ds.value("oracle_samples", 512);
        }
        const json& tr = detail::require_key(j, "train", "train.");
        detail::require_key(tr, "mode", "train.");
        cfg.train = TrainConfig::from_json(tr);
        if (j.contains("model")) {
            const json& m = j.at("model");
            cfg.hidden = m.value("hidden", cfg.hidden);
            cfg.pos_frequencies = m.value("pos_frequencies", cfg.pos_frequencies);
            cfg.dir_frequencies = m.value("dir_frequencies", cfg.dir_frequencies);
            cfg.use_direction = m.value("use_direction", cfg.use_direction);
        }
        if (j.contains("render")) {
            const json& r = j.at("render");
            cfg.render.n_samples = r.value("n_samples", cfg.train.n_samples);
            cfg.render.background = r.value("background", std::array<double, 3>{0, 0, 0});
            cfg.render.seed = r.value("seed", uint64_t(0));
        } else {
            cfg.render.n_samples = cfg.train.n_samples;
        }
        cfg.noise_std = j.value("noise_std", 0.0);
        cfg.keep_fraction = j.value("keep_fraction", 1.0);
        cfg.data_seed = j.value("data_seed", uint64_t(1000));
        if (cfg.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
        if (!(cfg.keep_fraction > 0.0 && cfg.keep_fraction <= 1.0))
            throw ConfigError("keep_fraction must be in (0,1]");
        return cfg;
    }

    MlpSpec model_spec(TrainMode mode) const {
        MlpSpec spec;
        spec.hidden = hidden;
        spec.head = head_for_mode(mode);
        spec.pos_enc.frequencies = pos_frequencies;
        spec.dir_enc.frequencies = dir_frequencies;
        if (task == "scene3d") {
            spec.pos_dim = 3;
            spec.density_branch = true;
            spec.use_direction = use_direction;
        } else {
            spec.pos_dim = 2;
            spec.density_branch = false;
            spec.use_direction = false;
        }
        spec.validate();
        return spec;
    }
};

struct BuiltData {
    std::optional<Image2dDataset> image2d;
    std::optional<SceneDataset> scene;
};

// Applies the degradation protocols in a fixed order: split (built in),
// then sparsify, then noise.
inline BuiltData build_dataset(const ExperimentConfig& cfg) {
    BuiltData data;
    if (cfg.task == "image2d") {
        Image img = cfg.image_path.empty() ? synthetic_image(cfg.synth_width, cfg.synth_height)
                                           : ppm_read(cfg.image_path);
        Image2dDataset ds = make_image2d(img);
        sparsify(ds, cfg.keep_fraction, cfg.data_seed);
        inject_noise(ds, cfg.noise_std, cfg.data_seed);
        data.image2d = std::move(ds);
    } else {
        SceneDataset ds = cfg.dataset_dir.empty()
                              ? build_scene_dataset(cfg.scene, cfg.rig, cfg.oracle_samples, eval_threads())
                              : load_scene_dataset(cfg.dataset_dir);
        sparsify(ds, cfg.keep_fraction, cfg.data_seed);
        inject_noise(ds, cfg.noise_std, cfg.data_seed);
        data.scene = std::move(ds);
    }
    return data;
}

struct FitOutcome {
    FieldModel model;
    TrainResult result;
    EvalResult train_eval;
    EvalResult test_eval;
};

inline FitOutcome fit_on(const BuiltData& data, const ExperimentConfig& cfg, TrainMode mode, uint64_t seed) {
    TrainConfig tc = cfg.train;
    tc.mode = mode;
    tc.seed = seed;
    FitOutcome out;
    out.model = init_model(cfg.model_spec(mode), seed);
    if (data.image2d) {
        out.result = train_image_field(out.model, *data.image2d, tc);
        out.train_eval = evaluate_image(out.model, *data.image2d, 0);
        out.test_eval = evaluate_image(out.model, *data.image2d, 1);
    } else {
        out.result = train_radiance_field(out.model, *data.scene, tc, cfg.render);
        out.train_eval = evaluate_scene(out.model, *data.scene, ViewRole::train, cfg.render, eval_threads());
        out.test_eval = evaluate_scene(out.model, *data.scene, ViewRole::test, cfg.render, eval_threads());
    }
    return out;
}

inline json metric_json(const MetricReport& m) {
    return {{"psnr", m.psnr}, {"ssim", m.ssim}, {"pixel_count", m.pixel_count}};
}

inline json metrics_json(const ExperimentConfig& cfg, TrainMode mode, const FitOutcome& fit) {
    json per_view = json::array();
    for (const MetricReport& m : fit.test_eval.per_view) per_view.push_back(metric_json(m));
    const LogRecord& last = fit.result.logs.back();
    return {{"task", cfg.task},
            {"mode", mode_name(mode)},
            {"seed", fit.model.seed},
            {"lambda", cfg.train.lambda},
            {"train", metric_json(fit.train_eval.mean)},
            {"test", metric_json(fit.test_eval.mean)},
            {"per_view_test", per_view},
            {"final", {{"iteration", last.iteration}, {"mse", last.mse}, {"cls", last.cls}, {"total", last.total}}}};
}

// fit: train one model, write log.jsonl, model.ckpt, rendered test views and
// metrics.json into the output directory.
inline json run_fit(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    BuiltData data = build_dataset(cfg);
    FitOutcome fit = fit_on(data, cfg, cfg.train.mode, cfg.train.seed);

    std::ofstream log(cfg.output_dir + "/log.jsonl");
    if (!log) throw IoError("cannot write log.jsonl in " + cfg.output_dir);
    for (const LogRecord& rec : fit.result.logs) log << rec.to_json().dump() << "\n";
    save_checkpoint(fit.model, cfg.output_dir + "/model.ckpt");

    if (data.image2d) {
        ppm_write(render_image_field(fit.model, data.image2d->target.width, data.image2d->target.height),
                  cfg.output_dir + "/test_0.ppm");
    } else {
        for (int vi : data.scene->view_indices(ViewRole::test)) {
            RenderConfig rc = cfg.render;
            rc.t_near = data.scene->views[vi].t_near;
            rc.t_far = data.scene->views[vi].t_far;
            Image img = render_image(fit.model, data.scene->views[vi].camera, rc, eval_threads());
            ppm_write(img, cfg.output_dir + "/test_" + std::to_string(vi) + ".ppm");
        }
    }
    json metrics = metrics_json(cfg, cfg.train.mode, fit);
    write_json_file(cfg.output_dir + "/metrics.json", metrics);
    return metrics;
}

// compare: NFR vs the configured NFC mode on identical data and seed. The
// trunk initialization is shared by construction: trunk weights are drawn
// before head weights, so the first draws coincide and only the re-sized
// final layer differs.
inline json run_compare(const ExperimentConfig& cfg, std::ostream& table_out = std::cout) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    TrainMode cls_mode = cfg.train.mode == TrainMode::nfr ? TrainMode::nfc_channelwise : cfg.train.mode;
    BuiltData data = build_dataset(cfg);
    FitOutcome reg = fit_on(data, cfg, TrainMode::nfr, cfg.train.seed);
    FitOutcome cls = fit_on(data, cfg, cls_mode, cfg.train.seed);

    const MetricReport& mr = reg.test_eval.mean;
    const MetricReport& mc = cls.test_eval.mean;
    json result = {{"task", cfg.task},
                   {"seed", cfg.train.seed},
                   {"classification_mode", mode_name(cls_mode)},
                   {"rows",
                    {{{"mode", "Regression"}, {"psnr", mr.psnr}, {"ssim", mr.ssim}},
                     {{"mode", "Classification"}, {"psnr", mc.psnr}, {"ssim", mc.ssim}}}},
                   {"best", {{"psnr", mc.psnr >= mr.psnr ? "Classification" : "Regression"},
                             {"ssim", mc.ssim >= mr.ssim ? "Classification" : "Regression"}}}};
    write_json_file(cfg.output_dir + "/compare.json", result);

    std::ostringstream table;
    table << std::fixed << std::setprecision(3);
    table << "mode             PSNR(dB)     SSIM\n";
    table << "Regression      " << std::setw(8) << mr.psnr << (mr.psnr > mc.psnr ? " *" : "  ") << std::setw(8)
          << mr.ssim << (mr.ssim > mc.ssim ? " *" : "") << "\n";
    table << "Classification  " << std::setw(8) << mc.psnr << (mc.psnr >= mr.psnr ? " *" : "  ") << std::setw(8)
          << mc.ssim << (mc.ssim >= mr.ssim ? " *" : "") << "\n";
    std::ofstream tf(cfg.output_dir + "/compare.txt");
    tf << table.str();
    table_out << table.str();
    return result;
}

// sweep-lambda: one NFC run per lambda plus one NFR baseline on shared data.
inline json run_sweep_lambda(const ExperimentConfig& cfg, std::vector<double> lambdas,
                             std::ostream& out = std::cout) {
    namespace fs = std::filesystem;
    for (double l : lambdas)
        if (!(l > 0.0)) throw ConfigError("sweep lambdas must be > 0");
    if (lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
    std::sort(lambdas.begin(), lambdas.end());
    fs::create_directories(cfg.output_dir);
    TrainMode cls_mode = cfg.train.mode == TrainMode::nfr ? TrainMode::nfc_channelwise : cfg.train.mode;
    BuiltData data = build_dataset(cfg);

    FitOutcome baseline = fit_on(data, cfg, TrainMode::nfr, cfg.train.seed);
    json entries = json::array();
    std::vector<std::pair<double, double>> curve;  // (lambda, psnr)
    for (double l : lambdas) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.train.lambda = l;
        FitOutcome fit = fit_on(data, run_cfg, cls_mode, cfg.train.seed);
        entries.push_back({{"lambda", l},
                           {"psnr", fit.test_eval.mean.psnr},
                           {"ssim", fit.test_eval.mean.ssim}});
        curve.emplace_back(l, fit.test_eval.mean.psnr);
    }
    json result = {{"task", cfg.task},
                   {"seed", cfg.train.seed},
                   {"classification_mode", mode_name(cls_mode)},
                   {"baseline", {{"mode", "nfr"},
                                 {"psnr", baseline.test_eval.mean.psnr},
                                 {"ssim", baseline.test_eval.mean.ssim}}},
                   {"entries", entries}};
    write_json_file(cfg.output_dir + "/sweep.json", result);

    // ASCII curve: one row per lambda, bar length scaled into the PSNR range.
    std::ostringstream plot;
    double lo = baseline.test_eval.mean.psnr, hi = lo;
    for (auto& [l, p] : curve) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double span = std::max(1e-9, hi - lo);
    plot << std::fixed << std::setprecision(3);
    plot << "lambda vs test PSNR (baseline nfr = " << baseline.test_eval.mean.psnr << " dB)\n";
    for (auto& [l, p] : curve) {
        int bar = static_cast<int>(std::lround(46.0 * (p - lo) / span));
        plot << std::setw(9) << l << " | " << std::string(bar, '#') << " " << p << "\n";
    }
    std::ofstream pf(cfg.output_dir + "/sweep.txt");
    pf << plot.str();
    out << plot.str();
    return result;
}

// make-data: materialize a dataset directory from a spec file.
inline json run_make_data(const json& spec, const std::string& output_dir_override = "") {
    std::string task = detail::require_key(spec, "task", "").get<std::string>();
    std::string out_dir = output_dir_override.empty()
                              ? detail::require_key(spec, "output_dir", "").get<std::string>()
                              : output_dir_override;
    double noise_std = spec.value("noise_std", 0.0);
    double keep_fraction = spec.value("keep_fraction", 1.0);
    uint64_t seed = spec.value("seed", uint64_t(1000));
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    if (task == "scene3d") {
        SceneSpec scene = spec.contains("scene") && spec.at("scene").is_object()
                              ? SceneSpec::from_json(spec.at("scene"))
                              : default_two_sphere_scene();
        RigSpec rig = spec.contains("rig") ? RigSpec::from_json(spec.at("rig")) : RigSpec{};
        SceneDataset ds = build_scene_dataset(scene, rig, spec.value("oracle_samples", 512), eval_threads());
        sparsify(ds, keep_fraction, seed);
        inject_noise(ds, noise_std, seed);
        save_scene_dataset(ds, out_dir, noise_std, keep_fraction, seed);
    } else if (task == "image2d") {
        Image img;
        if (spec.contains("image_path"))
            img = ppm_read(spec.at("image_path").get<std::string>());
        else
            img = synthetic_image(spec.value("width", 64), spec.value("height", 64));
        ppm_write(img, out_dir + "/target.ppm");
        json manifest = {{"task", "image2d"},
                         {"target", "target.ppm"},
                         {"width", img.width},
                         {"height", img.height},
                         {"noise_std", noise_std},
                         {"keep_fraction", keep_fraction},
                         {"seed", seed}};
        write_json_file(out_dir + "/manifest.json", manifest);
    } else {
        throw ConfigError("make-data task must be 'image2d' or 'scene3d'");
    }
    return {{"output_dir", out_dir}, {"task", task}};
}

// render: load a checkpoint and render it from a camera description file.
inline void run_render(const std::string& ckpt_path, const std::string& camera_path, const std::string& out_path,
                       int n_samples_override = 0) {
    FieldModel model = load_checkpoint(ckpt_path);
    json jc = read_json_file(camera_path);
    if (model.spec.pos_dim == 2) {
        int w = jc.value("width", 64), h = jc.value("height", 64);
        ppm_write(render_image_field(model, w, h), out_path);
        return;
    }
    Camera cam = Camera::from_json(jc);
    RenderConfig rc;
    rc.n_samples = n_samples_override > 0 ? n_samples_override : jc.value("n_samples", 64);
    rc.t_near = jc.value("t_near", 0.1);
    rc.t_far = jc.value("t_far", 10.0);
    rc.background = jc.value("background", std::array<double, 3>{0, 0, 0});
    ppm_write(render_image(model, cam, rc, eval_threads()), out_path);
}

}  // namespace nfc
