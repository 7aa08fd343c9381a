#pragma once

// Synthetic posed scenes ray-traced from analytic primitives. Ground-truth
// depth is the exact ray distance to the first hit (infinity on a miss).

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "liprf/camera.hpp"
#include "liprf/common.hpp"
#include "liprf/image.hpp"
#include "liprf/scene_io.hpp"

namespace liprf::fixtures {

/// albedo(p) = base + gradient * (p - anchor), clamped to [0,1].
struct Albedo {
    Vec3 base = Vec3::Constant(0.5);
    Mat3 gradient = Mat3::Zero();
    Vec3 anchor = Vec3::Zero();

    [[nodiscard]] Vec3 at(const Vec3& p) const { return (base + gradient * (p - anchor)).cwiseMax(0.0).cwiseMin(1.0); }
};

struct Box {
    Vec3 min;
    Vec3 max;
    Albedo albedo;
};

struct Sphere {
    Vec3 center;
    double radius = 0.5;
    Albedo albedo;
};

using Primitive = std::variant<Box, Sphere>;

struct Ring {
    int count = 8;
    double radius = 3.0;
    double elevation_deg = 25.0;
};

struct ToyScene {
    std::vector<Primitive> primitives;
    Bounds bounds;
    Vec3 background = Vec3::Ones();
    int width = 64;
    int height = 64;
    double focal = 100.0;
    Ring ring;
    std::vector<Pose> poses;  // explicit cameras; the ring is used when empty
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 color = Vec3::Zero();
};

inline std::optional<double> intersect(const Box& b, const Vec3& o, const Vec3& d) {
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
            continue;
        }
        double ta = (b.min[a] - o[a]) / d[a], tb = (b.max[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 < t0 || t0 <= 0.0) return std::nullopt;
    return t0;
}

inline std::optional<double> intersect(const Sphere& s, const Vec3& o, const Vec3& d) {
    const Vec3 oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double t = -b - std::sqrt(disc);
    if (t <= 0.0) return std::nullopt;
    return t;
}

/// Nearest hit along a unit-direction ray.
inline Hit trace(const ToyScene& scene, const Vec3& o, const Vec3& d) {
    Hit h;
    for (const auto& prim : scene.primitives) {
        std::visit(
            [&](const auto& p) {
                if (const auto t = intersect(p, o, d); t && *t < h.t) {
                    h.t = *t;
                    h.color = p.albedo.at(o + *t * d);
                }
            },
            prim);
    }
    return h;
}

inline bool inside(const Bounds& b, const Primitive& prim) {
    return std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Box>) {
                return b.contains(p.min) && b.contains(p.max);
            } else {
                return b.contains(p.center - Vec3::Constant(p.radius)) && b.contains(p.center + Vec3::Constant(p.radius));
            }
        },
        prim);
}

/// Camera ring around the bounds center, world up = +z. The seed jitters the
/// starting azimuth by up to a quarter of the angular spacing.
inline std::vector<Pose> ring_poses(const ToyScene& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double spacing = 2.0 * std::numbers::pi / s.ring.count;
    const double jitter = seed == 0 ? 0.0 : std::uniform_real_distribution<double>(0.0, 0.25 * spacing)(rng);
    const double el = s.ring.elevation_deg * std::numbers::pi / 180.0;
    const Vec3 c = s.bounds.center();
    std::vector<Pose> poses;
    for (int i = 0; i < s.ring.count; ++i) {
        const double az = jitter + i * spacing;
        const Vec3 eye = c + s.ring.radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        poses.push_back(look_at(eye, c, Vec3::UnitZ()));
    }
    return poses;
}

struct RenderedFixture {
    Image image;
    ScalarMap depth;
};

inline Camera make_camera(const ToyScene& s, const Pose& pose) {
    Camera c;
    c.width = s.width;
    c.height = s.height;
    c.focal = s.focal;
    c.cx = 0.5 * s.width;
    c.cy = 0.5 * s.height;
    c.pose = pose;
    return c;
}

inline RenderedFixture render_fixture(const ToyScene& s, const Camera& cam) {
    RenderedFixture out{Image(cam.width, cam.height), ScalarMap(cam.width, cam.height)};
    const int n = cam.width * cam.height;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n; ++p) {
        const int u = p % cam.width, v = p / cam.width;
        const Vec3 d = cam.direction_through(u + 0.5, v + 0.5).normalized();
        const Hit h = trace(s, cam.position(), d);
        out.image.set_pixel(u, v, std::isfinite(h.t) ? h.color : s.background);
        out.depth.at(u, v) = h.t;
    }
    return out;
}

/// Two colored objects with linearly varying albedo seen from an 8-view ring.
inline ToyScene two_object() {
    ToyScene s;
    Albedo box_albedo;
    box_albedo.base = Vec3(0.85, 0.25, 0.15);
    box_albedo.anchor = Vec3(-0.3, -0.15, -0.15);
    box_albedo.gradient.diagonal() = Vec3(0.3, 0.4, 0.0);
    box_albedo.gradient(2, 2) = 0.5;
    s.primitives.emplace_back(Box{Vec3(-0.65, -0.5, -0.5), Vec3(0.05, 0.2, 0.2), box_albedo});
    Albedo sphere_albedo;
    sphere_albedo.base = Vec3(0.2, 0.55, 0.8);
    sphere_albedo.anchor = Vec3(0.4, 0.3, 0.0);
    sphere_albedo.gradient(0, 2) = 0.4;
    sphere_albedo.gradient(1, 0) = -0.3;
    s.primitives.emplace_back(Sphere{Vec3(0.4, 0.3, 0.0), 0.35, sphere_albedo});
    return s;
}

/// Constant-color slab that fills the frame of two downward-looking cameras.
inline ToyScene slab() {
    ToyScene s;
    Albedo a;
    a.base = Vec3(0.8, 0.3, 0.2);
    s.primitives.emplace_back(Box{Vec3(-1.0, -1.0, -0.2), Vec3(1.0, 1.0, 0.0), a});
    s.width = 32;
    s.height = 32;
    s.focal = 40.0;
    for (double x : {-0.1, 0.1}) s.poses.push_back(look_at(Vec3(x, 0.0, 2.0), Vec3(x, 0.0, 0.0), Vec3::UnitY()));
    return s;
}

/// A small front plate in front of a wide back plate; cameras translate sideways.
inline ToyScene occluder() {
    ToyScene s;
    Albedo back;
    back.base = Vec3(0.3, 0.7, 0.3);
    back.anchor = Vec3::Zero();
    back.gradient(0, 0) = 0.2;
    Albedo front;
    front.base = Vec3(0.9, 0.2, 0.6);
    s.primitives.emplace_back(Box{Vec3(-1.0, -1.0, -1.0), Vec3(1.0, 1.0, -0.9), back});
    s.primitives.emplace_back(Box{Vec3(-0.2, -0.2, 0.1), Vec3(0.2, 0.2, 0.2), front});
    s.width = 48;
    s.height = 48;
    s.focal = 60.0;
    for (double x : {-0.3, 0.0, 0.3})
        s.poses.push_back(look_at(Vec3(x, 0.0, 2.5), Vec3(x, 0.0, 0.0), Vec3::UnitY()));
    return s;
}

inline ToyScene preset(const std::string& name) {
    if (name == "two_object") return two_object();
    if (name == "slab") return slab();
    if (name == "occluder") return occluder();
    throw Error("unknown fixture preset '" + name + "'");
}

inline std::string frame_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return buf;
}

struct GeneratedScene {
    SceneManifest manifest;
    std::vector<RenderedFixture> views;
};

/// Renders every camera of the scene in memory.
inline GeneratedScene generate(const ToyScene& scene, std::uint64_t seed = 0) {
    for (const auto& p : scene.primitives)
        if (!inside(scene.bounds, p)) throw Error("fixture primitive lies outside the scene bounds");
    GeneratedScene g;
    auto& m = g.manifest;
    m.width = scene.width;
    m.height = scene.height;
    m.focal = scene.focal;
    m.cx = 0.5 * scene.width;
    m.cy = 0.5 * scene.height;
    m.bounds = scene.bounds;
    m.background = scene.background;
    m.poses = scene.poses.empty() ? ring_poses(scene, seed) : scene.poses;
    for (std::size_t i = 0; i < m.poses.size(); ++i) {
        m.files.push_back("images/" + frame_name(i) + ".png");
        g.views.push_back(render_fixture(scene, m.camera(i)));
    }
    return g;
}

/// Writes images/NNN.png, depth/NNN.pfm and scene.json under `dir`.
inline SceneManifest generate_scene(const ToyScene& scene, const std::filesystem::path& dir, std::uint64_t seed = 0) {
    const GeneratedScene g = generate(scene, seed);
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "depth");
    for (std::size_t i = 0; i < g.views.size(); ++i) {
        write_image(g.views[i].image, dir / g.manifest.files[i]);
        write_pfm(g.views[i].depth, dir / "depth" / (frame_name(i) + ".pfm"));
    }
    write_manifest(g.manifest, dir / "scene.json");
    return g.manifest;
}

/// Dataset view of an in-memory scene, with images quantized exactly as on disk.
inline SceneDataset to_dataset(const GeneratedScene& g) {
    SceneDataset ds;
    ds.bounds = g.manifest.bounds;
    ds.background = g.manifest.background;
    for (std::size_t i = 0; i < g.views.size(); ++i) {
        View v;
        v.camera = g.manifest.camera(i);
        v.image = g.views[i].image;
        for (double& x : v.image.data) x = quantize8(x) / 255.0;
        v.file = g.manifest.files[i];
        ds.views.push_back(std::move(v));
    }
    return ds;
}

}  // namespace liprf::fixtures
