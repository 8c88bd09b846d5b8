#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfc/errors.hpp"
#include "nfc/image.hpp"
#include "nfc/random.hpp"
#include "nfc/rendering.hpp"

namespace nfc {

// ---------------------------------------------------------------------------
// Synthetic 3D scenes: constant-density spheres with a thin smoothstep edge
// band. The band keeps the density field continuous, which the midpoint
// quadrature needs to converge at silhouettes; interiors stay constant.

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    std::array<double, 3> color{1.0, 1.0, 1.0};
    double density = 40.0;
};

struct SceneSpec {
    std::vector<Sphere> spheres;
    std::array<double, 3> background{0.0, 0.0, 0.0};
    Vec3 bounds_min = Vec3(-2, -2, -2);
    Vec3 bounds_max = Vec3(2, 2, 2);
    double edge_band = 0.15;  // falloff width as a fraction of each radius

    void validate() const {
        for (const Sphere& s : spheres) {
            if (!(s.radius > 0.0)) throw ConfigError("sphere radius must be positive");
            if (!(s.density > 0.0)) throw ConfigError("sphere density must be positive");
            for (double c : s.color)
                if (c < 0.0 || c > 1.0) throw ConfigError("sphere color outside [0,1]");
            for (int i = 0; i < 3; ++i)
                if (s.center[i] - s.radius < bounds_min[i] - 1e-9 || s.center[i] + s.radius > bounds_max[i] + 1e-9)
                    throw ConfigError("sphere exceeds scene bounds");
        }
        if (!(edge_band > 0.0 && edge_band < 1.0)) throw ConfigError("edge_band must be in (0,1)");
    }

    nlohmann::json to_json() const {
        nlohmann::json spheres_json = nlohmann::json::array();
        for (const Sphere& s : spheres)
            spheres_json.push_back({{"center", {s.center.x(), s.center.y(), s.center.z()}},
                                    {"radius", s.radius},
                                    {"color", s.color},
                                    {"density", s.density}});
        return {{"spheres", spheres_json},
                {"background", background},
                {"bounds_min", {bounds_min.x(), bounds_min.y(), bounds_min.z()}},
                {"bounds_max", {bounds_max.x(), bounds_max.y(), bounds_max.z()}},
                {"edge_band", edge_band}};
    }
    static SceneSpec from_json(const nlohmann::json& j) {
        SceneSpec spec;
        spec.spheres.clear();
        for (const auto& js : j.at("spheres")) {
            Sphere s;
            auto c = js.at("center");
            s.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
            s.radius = js.at("radius").get<double>();
            s.color = js.at("color").get<std::array<double, 3>>();
            s.density = js.value("density", 40.0);
            spec.spheres.push_back(s);
        }
        spec.background = j.value("background", std::array<double, 3>{0, 0, 0});
        if (j.contains("bounds_min")) {
            auto lo = j.at("bounds_min"), hi = j.at("bounds_max");
            spec.bounds_min = Vec3(lo.at(0).get<double>(), lo.at(1).get<double>(), lo.at(2).get<double>());
            spec.bounds_max = Vec3(hi.at(0).get<double>(), hi.at(1).get<double>(), hi.at(2).get<double>());
        }
        spec.edge_band = j.value("edge_band", 0.15);
        spec.validate();
        return spec;
    }
};

inline double smoothstep01(double u) {
    u = std::min(1.0, std::max(0.0, u));
    return u * u * (3.0 - 2.0 * u);
}

// Density and color at a point: the sphere contributing the highest density
// wins (scenes are built non-overlapping, so this is just tie hygiene).
inline void scene_density_color(const SceneSpec& scene, const Vec3& p, double& sigma, double* rgb) {
    sigma = 0.0;
    rgb[0] = rgb[1] = rgb[2] = 0.0;
    for (const Sphere& s : scene.spheres) {
        double r = (p - s.center).norm();
        if (r >= s.radius) continue;
        double band = s.radius * scene.edge_band;
        double d = s.density * smoothstep01((s.radius - r) / band);
        if (d > sigma) {
            sigma = d;
            rgb[0] = s.color[0];
            rgb[1] = s.color[1];
            rgb[2] = s.color[2];
        }
    }
}

// Reference ground-truth renderer: dense deterministic midpoint quadrature,
// no RNG involved.
inline Image oracle_render(const SceneSpec& scene, const Camera& camera, double t_near, double t_far,
                           int n_samples = 512, int threads = 1) {
    scene.validate();
    RenderConfig cfg;
    cfg.n_samples = n_samples;
    cfg.background = scene.background;
    cfg.t_near = t_near;
    cfg.t_far = t_far;
    cfg.midpoint = true;
    auto field = [&](std::span<const double> positions, std::span<const double>, std::span<double> sigma,
                     std::span<double> channels) {
        const size_t n = sigma.size();
        for (size_t i = 0; i < n; ++i) {
            Vec3 p(positions[i * 3], positions[i * 3 + 1], positions[i * 3 + 2]);
            scene_density_color(scene, p, sigma[i], &channels[i * 3]);
        }
    };
    return render_field_image(field, camera, cfg, scene.background, threads);
}

// Circular camera rig around a target point, all cameras looking inward.
inline std::vector<Camera> circle_rig(int n_views, double rig_radius, double height, const Vec3& target, int width,
                                      int height_px, double focal) {
    std::vector<Camera> rig;
    rig.reserve(n_views);
    for (int i = 0; i < n_views; ++i) {
        double a = 2.0 * M_PI * i / n_views;
        Vec3 pos = target + Vec3(rig_radius * std::cos(a), height, rig_radius * std::sin(a));
        rig.push_back(Camera::look_at(pos, target, Vec3(0, 1, 0), width, height_px, focal));
    }
    return rig;
}

// ---------------------------------------------------------------------------
// Datasets and degradation protocols.

enum class ViewRole { train, test, dropped };

inline std::string role_name(ViewRole r) {
    switch (r) {
        case ViewRole::train: return "train";
        case ViewRole::test: return "test";
        case ViewRole::dropped: return "dropped";
    }
    return "?";
}
inline ViewRole role_from_name(const std::string& s) {
    if (s == "train") return ViewRole::train;
    if (s == "test") return ViewRole::test;
    if (s == "dropped") return ViewRole::dropped;
    throw ConfigError("unknown view role '" + s + "'");
}

// Index divisible by 10 goes to the test split, everything else trains.
inline std::vector<ViewRole> split_by_index(int n_views) {
    std::vector<ViewRole> roles(n_views);
    for (int i = 0; i < n_views; ++i) roles[i] = (i % 10 == 0) ? ViewRole::test : ViewRole::train;
    if (n_views < 10 && n_views > 0)
        std::cerr << "warning: only " << n_views << " views; the divisible-by-10 rule leaves "
                  << (n_views > 0 ? 1 : 0) << " test view(s)\n";
    return roles;
}

struct View {
    Camera camera;
    Image image;  // supervision values (test views are always pristine)
    ViewRole role = ViewRole::train;
    double t_near = 0.1, t_far = 10.0;
};

struct SceneDataset {
    SceneSpec scene;
    std::vector<View> views;

    std::vector<int> view_indices(ViewRole role) const {
        std::vector<int> idx;
        for (size_t i = 0; i < views.size(); ++i)
            if (views[i].role == role) idx.push_back(static_cast<int>(i));
        return idx;
    }
};

struct RigSpec {
    int n_views = 20;
    double radius = 3.5;
    double height = 1.2;
    int image_size = 48;
    double focal_px = 55.0;

    nlohmann::json to_json() const {
        return {{"n_views", n_views},
                {"radius", radius},
                {"height", height},
                {"image_size", image_size},
                {"focal_px", focal_px}};
    }
    static RigSpec from_json(const nlohmann::json& j) {
        RigSpec r;
        r.n_views = j.value("n_views", 20);
        r.radius = j.value("radius", 3.5);
        r.height = j.value("height", 1.2);
        r.image_size = j.value("image_size", 48);
        r.focal_px = j.value("focal_px", 55.0);
        return r;
    }
};

// Near/far bounds so every camera covers the whole scene bounding sphere.
inline void scene_ray_bounds(const SceneSpec& scene, const Camera& camera, double& t_near, double& t_far) {
    Vec3 center = 0.5 * (scene.bounds_min + scene.bounds_max);
    double radius = 0.5 * (scene.bounds_max - scene.bounds_min).norm();
    double dist = (camera.translation - center).norm();
    t_near = std::max(0.05, dist - radius);
    t_far = dist + radius;
}

inline SceneDataset build_scene_dataset(const SceneSpec& scene, const RigSpec& rig, int oracle_samples = 512,
                                        int threads = 1) {
    scene.validate();
    SceneDataset ds;
    ds.scene = scene;
    Vec3 center = 0.5 * (scene.bounds_min + scene.bounds_max);
    std::vector<Camera> cameras =
        circle_rig(rig.n_views, rig.radius, rig.height, center, rig.image_size, rig.image_size, rig.focal_px);
    std::vector<ViewRole> roles = split_by_index(rig.n_views);
    for (int i = 0; i < rig.n_views; ++i) {
        View v;
        v.camera = cameras[i];
        v.role = roles[i];
        scene_ray_bounds(scene, v.camera, v.t_near, v.t_far);
        v.image = oracle_render(scene, v.camera, v.t_near, v.t_far, oracle_samples, threads);
        ds.views.push_back(std::move(v));
    }
    return ds;
}

// 2D image-fitting dataset. The train/test split holds out pixels (index
// divisible by 10), mirroring the view split rule at pixel level; sparsity
// then drops train pixels, and noise corrupts only train supervision values.
struct Image2dDataset {
    Image target;  // supervision (train pixels possibly corrupted)
    Image clean;
    std::vector<uint8_t> role;  // per pixel: 0 train, 1 test, 2 dropped

    std::vector<int> pixels_with_role(uint8_t r) const {
        std::vector<int> idx;
        for (size_t i = 0; i < role.size(); ++i)
            if (role[i] == r) idx.push_back(static_cast<int>(i));
        return idx;
    }
    std::vector<uint8_t> mask_of(uint8_t r) const {
        std::vector<uint8_t> m(role.size(), 0);
        for (size_t i = 0; i < role.size(); ++i) m[i] = role[i] == r;
        return m;
    }
};

inline Image2dDataset make_image2d(const Image& img) {
    Image2dDataset ds;
    ds.target = img;
    ds.clean = img;
    ds.role.resize(img.pixel_count());
    for (size_t i = 0; i < ds.role.size(); ++i) ds.role[i] = (i % 10 == 0) ? 1 : 0;
    return ds;
}

namespace detail {
// Keeps ceil(keep_fraction * n) of the given items, chosen uniformly without
// replacement; returns kept flags aligned with `items`.
inline std::vector<char> keep_subset(size_t n, double keep_fraction, Rng& rng) {
    size_t keep = static_cast<size_t>(std::ceil(keep_fraction * double(n)));
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    for (size_t i = 0; i < n; ++i) {
        size_t j = i + rng.uniform_int(n - i);
        std::swap(order[i], order[j]);
    }
    std::vector<char> kept(n, 0);
    for (size_t i = 0; i < keep; ++i) kept[order[i]] = 1;
    return kept;
}
}  // namespace detail

inline void sparsify(SceneDataset& ds, double keep_fraction, uint64_t seed) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ConfigError("keep_fraction must be in (0,1]");
    if (keep_fraction == 1.0) return;
    std::vector<int> train = ds.view_indices(ViewRole::train);
    if (train.empty()) throw ConfigError("sparsify: no training views");
    Rng rng(seed, 0x50u);
    std::vector<char> kept = detail::keep_subset(train.size(), keep_fraction, rng);
    for (size_t i = 0; i < train.size(); ++i)
        if (!kept[i]) ds.views[train[i]].role = ViewRole::dropped;
}

inline void sparsify(Image2dDataset& ds, double keep_fraction, uint64_t seed) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ConfigError("keep_fraction must be in (0,1]");
    if (keep_fraction == 1.0) return;
    std::vector<int> train = ds.pixels_with_role(0);
    if (train.empty()) throw ConfigError("sparsify: no training pixels");
    Rng rng(seed, 0x51u);
    std::vector<char> kept = detail::keep_subset(train.size(), keep_fraction, rng);
    for (size_t i = 0; i < train.size(); ++i)
        if (!kept[i]) ds.role[train[i]] = 2;
}

// Additive zero-mean Gaussian noise, i.i.d. per color value, clipped to
// [0,1]. Applied to training supervision only; test data stays pristine.
inline void inject_noise(SceneDataset& ds, double std_dev, uint64_t seed) {
    if (std_dev < 0.0) throw ConfigError("noise std must be >= 0");
    if (std_dev == 0.0) return;
    Rng rng(seed, 0x401u);
    for (View& v : ds.views) {
        if (v.role != ViewRole::train) continue;
        for (double& x : v.image.rgb) x = std::min(1.0, std::max(0.0, x + std_dev * rng.gaussian()));
    }
}

inline void inject_noise(Image2dDataset& ds, double std_dev, uint64_t seed) {
    if (std_dev < 0.0) throw ConfigError("noise std must be >= 0");
    if (std_dev == 0.0) return;
    Rng rng(seed, 0x402u);
    for (size_t p = 0; p < ds.role.size(); ++p) {
        if (ds.role[p] != 0) continue;
        for (int c = 0; c < 3; ++c) {
            double& x = ds.target.rgb[p * 3 + c];
            x = std::min(1.0, std::max(0.0, x + std_dev * rng.gaussian()));
        }
    }
}

// ---------------------------------------------------------------------------
// Built-in targets and scenes.

// Deterministic mid-tone test pattern: smooth color gradients, a few soft
// disks, and mild high-frequency texture.
inline Image synthetic_image(int width, int height) {
    Image img(width, height);
    auto disk = [](double u, double v, double cx, double cy, double r) {
        double d = std::sqrt((u - cx) * (u - cx) + (v - cy) * (v - cy));
        return smoothstep01((r - d) / (0.35 * r));
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double u = (x + 0.5) / width, v = (y + 0.5) / height;
            double r = 0.45 + 0.25 * std::sin(2 * M_PI * (1.3 * u + 0.4 * v)) +
                       0.08 * std::sin(2 * M_PI * 4.0 * u) * std::cos(2 * M_PI * 3.0 * v);
            double g = 0.50 + 0.22 * std::cos(2 * M_PI * (0.9 * v - 0.3 * u)) +
                       0.07 * std::sin(2 * M_PI * 5.0 * u + 1.0);
            double b = 0.55 + 0.20 * std::sin(2 * M_PI * 0.7 * (u + v)) + 0.09 * std::cos(2 * M_PI * 4.5 * v);
            double d1 = disk(u, v, 0.30, 0.35, 0.18), d2 = disk(u, v, 0.70, 0.65, 0.22),
                   d3 = disk(u, v, 0.62, 0.25, 0.10);
            r += 0.25 * d1 - 0.20 * d2;
            g += -0.15 * d1 + 0.18 * d2 - 0.05 * d3;
            b += -0.05 * d1 + 0.10 * d2 + 0.28 * d3;
            img.at(x, y, 0) = std::min(0.95, std::max(0.05, r));
            img.at(x, y, 1) = std::min(0.95, std::max(0.05, g));
            img.at(x, y, 2) = std::min(0.95, std::max(0.05, b));
        }
    }
    return img;
}

inline SceneSpec default_two_sphere_scene() {
    SceneSpec scene;
    Sphere a;
    a.center = Vec3(-0.55, 0.0, 0.0);
    a.radius = 0.5;
    a.color = {0.85, 0.25, 0.2};
    Sphere b;
    b.center = Vec3(0.55, 0.15, 0.25);
    b.radius = 0.42;
    b.color = {0.2, 0.45, 0.85};
    scene.spheres = {a, b};
    scene.background = {0.0, 0.0, 0.0};
    scene.bounds_min = Vec3(-1.2, -1.2, -1.2);
    scene.bounds_max = Vec3(1.2, 1.2, 1.2);
    return scene;
}

// ---------------------------------------------------------------------------
// Dataset directory layout: view_###.ppm plus manifest.json.

inline void save_scene_dataset(const SceneDataset& ds, const std::string& dir, double noise_std,
                               double keep_fraction, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json views = nlohmann::json::array();
    for (size_t i = 0; i < ds.views.size(); ++i) {
        const View& v = ds.views[i];
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03zu.ppm", i);
        ppm_write(v.image, dir + "/" + name);
        views.push_back({{"file", name},
                         {"camera", v.camera.to_json()},
                         {"role", role_name(v.role)},
                         {"t_near", v.t_near},
                         {"t_far", v.t_far}});
    }
    nlohmann::json manifest = {{"task", "scene3d"},   {"scene", ds.scene.to_json()},
                               {"views", views},      {"noise_std", noise_std},
                               {"keep_fraction", keep_fraction}, {"seed", seed}};
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

inline SceneDataset load_scene_dataset(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw IoError("cannot read manifest in " + dir);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad manifest in " + dir + ": " + e.what());
    }
    SceneDataset ds;
    ds.scene = SceneSpec::from_json(manifest.at("scene"));
    for (const auto& jv : manifest.at("views")) {
        View v;
        v.camera = Camera::from_json(jv.at("camera"));
        v.role = role_from_name(jv.at("role").get<std::string>());
        v.t_near = jv.at("t_near").get<double>();
        v.t_far = jv.at("t_far").get<double>();
        v.image = ppm_read(dir + "/" + jv.at("file").get<std::string>());
        ds.views.push_back(std::move(v));
    }
    return ds;
}

}  // namespace nfc
