#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nfc/encoding.hpp"
#include "nfc/errors.hpp"
#include "nfc/field_models.hpp"
#include "nfc/image.hpp"
#include "nfc/random.hpp"
#include "nfc/tensor.hpp"

namespace nfc {

using Vec3 = Eigen::Vector3d;

// Distance cap for the last sample interval, so opaque far content saturates.
inline constexpr double kLastDelta = 1e10;

// Pinhole camera with a camera-to-world pose. The camera looks along its
// local -z axis, x right, y up.
struct Camera {
    int width = 0;
    int height = 0;
    double focal = 0.0;  // pixels
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const {
        if (width <= 0 || height <= 0) throw ConfigError("camera dimensions must be positive");
        if (!(focal > 0.0)) throw ConfigError("camera focal length must be positive");
        Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
        if (err.cwiseAbs().maxCoeff() > 1e-9) throw ConfigError("camera rotation is not orthonormal");
    }

    nlohmann::json to_json() const {
        nlohmann::json pose = nlohmann::json::array();
        for (int r = 0; r < 3; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < 3; ++c) row.push_back(rotation(r, c));
            row.push_back(translation[r]);
            pose.push_back(row);
        }
        return {{"width", width}, {"height", height}, {"focal", focal}, {"pose", pose}};
    }
    static Camera from_json(const nlohmann::json& j) {
        Camera cam;
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.focal = j.at("focal").get<double>();
        const auto& pose = j.at("pose");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.rotation(r, c) = pose.at(r).at(c).get<double>();
            cam.translation[r] = pose.at(r).at(3).get<double>();
        }
        cam.validate();
        return cam;
    }

    static Camera look_at(const Vec3& position, const Vec3& target, const Vec3& up, int width, int height,
                          double focal) {
        Camera cam;
        cam.width = width;
        cam.height = height;
        cam.focal = focal;
        Vec3 z = (position - target).normalized();
        Vec3 x = up.cross(z).normalized();
        Vec3 y = z.cross(x);
        cam.rotation.col(0) = x;
        cam.rotation.col(1) = y;
        cam.rotation.col(2) = z;
        cam.translation = position;
        cam.validate();
        return cam;
    }
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::Zero();  // unit
    double t_near = 0.0, t_far = 0.0;
    int pixel = 0;  // y * width + x
};

// Ray through the center of a pixel, in world space.
inline Ray pixel_ray(const Camera& camera, int pixel, double t_near, double t_far) {
    if (pixel < 0 || pixel >= camera.width * camera.height)
        throw ConfigError("pixel index " + std::to_string(pixel) + " out of bounds");
    if (!(t_near < t_far)) throw ConfigError("ray requires t_near < t_far");
    const int x = pixel % camera.width, y = pixel / camera.width;
    Vec3 d_cam((x + 0.5 - camera.width / 2.0) / camera.focal, -(y + 0.5 - camera.height / 2.0) / camera.focal,
               -1.0);
    Ray ray;
    ray.direction = (camera.rotation * d_cam).normalized();
    ray.origin = camera.translation;
    ray.t_near = t_near;
    ray.t_far = t_far;
    ray.pixel = pixel;
    return ray;
}

inline std::vector<Ray> generate_rays(const Camera& camera, std::span<const int> pixels, double t_near,
                                      double t_far) {
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (int p : pixels) rays.push_back(pixel_ray(camera, p, t_near, t_far));
    return rays;
}

struct RaySamples {
    std::vector<double> ts;      // strictly increasing depths in [t_near, t_far]
    std::vector<double> deltas;  // ts[i+1] - ts[i]; last entry capped at kLastDelta
};

inline void fill_deltas(RaySamples& s) {
    const size_t n = s.ts.size();
    s.deltas.resize(n);
    for (size_t i = 0; i + 1 < n; ++i) s.deltas[i] = s.ts[i + 1] - s.ts[i];
    s.deltas[n - 1] = kLastDelta;
}

// One uniform draw per equal-width bin of [t_near, t_far].
inline RaySamples stratified_sample(const Ray& ray, int n, Rng& rng) {
    if (n < 1) throw ConfigError("sample count must be >= 1");
    RaySamples s;
    s.ts.resize(n);
    const double w = (ray.t_far - ray.t_near) / n;
    for (int i = 0; i < n; ++i) s.ts[i] = ray.t_near + (i + rng.uniform()) * w;
    fill_deltas(s);
    return s;
}

// Deterministic bin midpoints; used by the reference oracle renderer.
inline RaySamples midpoint_sample(const Ray& ray, int n) {
    if (n < 1) throw ConfigError("sample count must be >= 1");
    RaySamples s;
    s.ts.resize(n);
    const double w = (ray.t_far - ray.t_near) / n;
    for (int i = 0; i < n; ++i) s.ts[i] = ray.t_near + (i + 0.5) * w;
    fill_deltas(s);
    return s;
}

struct CompositeResult {
    std::vector<double> color;    // K channels
    std::vector<double> weights;  // per sample
    double weight_sum = 0.0;      // 1 - final transmittance
};

// Discrete quadrature of the transmittance-weighted color integral:
// alpha_i = 1 - exp(-sigma_i * delta_i), T_{i+1} = T_i (1 - alpha_i),
// w_i = T_i alpha_i. Output = sum w_i c_i + T_final * background.
inline CompositeResult composite(std::span<const double> sigma, std::span<const double> channels,
                                 std::span<const double> deltas, std::span<const double> background) {
    const size_t n = sigma.size();
    const size_t k = background.size();
    CompositeResult out;
    out.color.assign(k, 0.0);
    out.weights.resize(n);
    double transmittance = 1.0;
    for (size_t i = 0; i < n; ++i) {
        if (sigma[i] < 0.0) throw DomainError("negative density " + std::to_string(sigma[i]) + " in composite");
        const double decay = std::exp(-sigma[i] * deltas[i]);
        const double w = transmittance * (1.0 - decay);
        out.weights[i] = w;
        for (size_t c = 0; c < k; ++c) out.color[c] += w * channels[i * k + c];
        transmittance *= decay;
    }
    out.weight_sum = 1.0 - transmittance;
    for (size_t c = 0; c < k; ++c) out.color[c] += transmittance * background[c];
    return out;
}

// Tape version over a batch: sigma [P,1] and channels [P,K] are per-point
// outputs grouped ray-major (P = rays * samples). Transmittance uses the
// exclusive cumulative optical depth so gradients stay well-defined through
// fully opaque samples.
struct TapeComposite {
    Value color;       // [rays, K]
    Value weight_sum;  // [rays, 1]
};

inline TapeComposite composite_tape(Tape& t, Value sigma, Value channels, const Tensor& deltas,
                                    std::span<const double> background, int rays, int samples) {
    const int k = static_cast<int>(background.size());
    Value sig = t.reshape(sigma, {rays, samples});
    Value optical = t.mul(sig, t.leaf(deltas));
    Value transmittance = t.exp(t.neg(t.cumsum_exclusive(optical)));
    Value alpha = t.one_minus(t.exp(t.neg(optical)));
    Value w = t.mul(transmittance, alpha);
    TapeComposite out;
    out.weight_sum = t.row_sum(w);
    Value w_col = t.reshape(w, {rays * samples, 1});
    Value weighted = t.mul(channels, w_col);
    Value comp = t.sum_groups(weighted, samples);
    Tensor bg = Tensor::zeros({1, k});
    std::copy(background.begin(), background.end(), bg.data.begin());
    Value bg_term = t.mul(t.broadcast(t.one_minus(out.weight_sum), {rays, k}), t.leaf(bg));
    out.color = t.add(comp, bg_term);
    return out;
}

// Background for compositing in bit-probability space: a constant vector
// decodes to exactly its value, so this choice commutes with decoding.
inline std::vector<double> background_bits(const std::array<double, 3>& bg) {
    std::vector<double> out(24);
    for (int ch = 0; ch < 3; ++ch)
        for (int j = 0; j < 8; ++j) out[static_cast<size_t>(ch) * 8 + j] = bg[ch];
    return out;
}

struct RenderConfig {
    int n_samples = 64;
    std::array<double, 3> background{0.0, 0.0, 0.0};
    double t_near = 0.1;
    double t_far = 10.0;
    uint64_t seed = 0;
    bool midpoint = false;  // deterministic midpoint sampling instead of stratified

    nlohmann::json to_json() const {
        return {{"n_samples", n_samples},
                {"background", background},
                {"t_near", t_near},
                {"t_far", t_far},
                {"midpoint", midpoint}};
    }
};

inline int eval_threads() {
    if (const char* env = std::getenv("NFC_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

// Renders an image by compositing an arbitrary point-sampled field. FieldFn:
// (positions [M*3], dirs [M*3], sigma_out [M], channels_out [M*K]) with K
// matching background.size(). Per-pixel RNG streams are derived from
// (seed, pixel), so results do not depend on chunking or thread count.
template <class FieldFn>
Image render_field_image(FieldFn&& field, const Camera& camera, const RenderConfig& cfg,
                         std::span<const double> background, int threads = 1) {
    camera.validate();
    Image img(camera.width, camera.height);
    const int n_pixels = camera.width * camera.height;
    const int k = static_cast<int>(background.size());
    const int chunk = 256;

    auto render_range = [&](int begin, int end) {
        std::vector<double> positions, dirs, sigma, channels;
        std::vector<RaySamples> samples;
        for (int base = begin; base < end; base += chunk) {
            const int count = std::min(chunk, end - base);
            positions.assign(static_cast<size_t>(count) * cfg.n_samples * 3, 0.0);
            dirs.assign(static_cast<size_t>(count) * cfg.n_samples * 3, 0.0);
            samples.assign(count, {});
            for (int i = 0; i < count; ++i) {
                Ray ray = pixel_ray(camera, base + i, cfg.t_near, cfg.t_far);
                if (cfg.midpoint) {
                    samples[i] = midpoint_sample(ray, cfg.n_samples);
                } else {
                    Rng rng(cfg.seed, static_cast<uint64_t>(ray.pixel));
                    samples[i] = stratified_sample(ray, cfg.n_samples, rng);
                }
                for (int s = 0; s < cfg.n_samples; ++s) {
                    Vec3 p = ray.origin + samples[i].ts[s] * ray.direction;
                    size_t off = (static_cast<size_t>(i) * cfg.n_samples + s) * 3;
                    positions[off] = p.x();
                    positions[off + 1] = p.y();
                    positions[off + 2] = p.z();
                    dirs[off] = ray.direction.x();
                    dirs[off + 1] = ray.direction.y();
                    dirs[off + 2] = ray.direction.z();
                }
            }
            sigma.assign(static_cast<size_t>(count) * cfg.n_samples, 0.0);
            channels.assign(static_cast<size_t>(count) * cfg.n_samples * k, 0.0);
            field(std::span<const double>(positions), std::span<const double>(dirs), std::span<double>(sigma),
                  std::span<double>(channels));
            for (int i = 0; i < count; ++i) {
                auto res = composite(
                    std::span<const double>(sigma).subspan(static_cast<size_t>(i) * cfg.n_samples, cfg.n_samples),
                    std::span<const double>(channels)
                        .subspan(static_cast<size_t>(i) * cfg.n_samples * k, static_cast<size_t>(cfg.n_samples) * k),
                    samples[i].deltas, background);
                double rgb[3];
                if (k == 24) {
                    decode_bits_plain(res.color, std::span<double>(rgb, 3));
                } else {
                    rgb[0] = res.color[0];
                    rgb[1] = res.color[1];
                    rgb[2] = res.color[2];
                }
                for (int c = 0; c < 3; ++c) img.rgb[static_cast<size_t>(base + i) * 3 + c] = rgb[c];
            }
        }
    };

    if (threads <= 1) {
        render_range(0, n_pixels);
    } else {
        std::vector<std::thread> pool;
        const int per = (n_pixels + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            int begin = t * per, end = std::min(n_pixels, begin + per);
            if (begin < end) pool.emplace_back(render_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    return img;
}

// Renders a radiance-field model. Classifier models composite their 24 bit
// probabilities and decode afterwards (equal, by linearity, to compositing
// decoded colors). Pixel values are the raw composited outputs; clamping to
// [0,1] happens only at file write time.
inline Image render_image(const FieldModel& model, const Camera& camera, const RenderConfig& cfg,
                          int threads = 1) {
    const bool classifier = model.spec.head == HeadType::classifier24;
    std::vector<double> bg = classifier
                                 ? background_bits(cfg.background)
                                 : std::vector<double>(cfg.background.begin(), cfg.background.end());
    auto field = [&](std::span<const double> positions, std::span<const double> dirs, std::span<double> sigma,
                     std::span<double> channels) {
        FieldEval eval = eval_radiance_field(model, positions, dirs);
        std::copy(eval.sigma.data(), eval.sigma.data() + eval.sigma.size(), sigma.begin());
        const RowMat& src = classifier ? eval.bits : eval.colors;
        std::copy(src.data(), src.data() + src.size(), channels.begin());
    };
    return render_field_image(field, camera, cfg, bg, threads);
}

// Renders a 2D image-field model on the pixel grid of a width x height image.
inline Image render_image_field(const FieldModel& model, int width, int height) {
    Image img(width, height);
    std::vector<double> coords(static_cast<size_t>(width) * height * 2);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            coords[(static_cast<size_t>(y) * width + x) * 2] = (x + 0.5) / width;
            coords[(static_cast<size_t>(y) * width + x) * 2 + 1] = (y + 0.5) / height;
        }
    FieldEval eval = eval_image_field(model, coords);
    std::copy(eval.colors.data(), eval.colors.data() + eval.colors.size(), img.rgb.begin());
    return img;
}

}  // namespace nfc
