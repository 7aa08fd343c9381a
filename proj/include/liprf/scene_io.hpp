#pragma once

// Posed-image datasets described by a `scene.json` manifest.
//
// Manifest fields: width, height, focal, cx, cy, bounds_min[3], bounds_max[3],
// frames: [{file, transform: 12 numbers, row-major 3x4 camera-to-world}],
// optional stylized_dir (images with the same file names, index-aligned) and
// optional background[3].

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "liprf/camera.hpp"
#include "liprf/common.hpp"
#include "liprf/image.hpp"

namespace liprf {

struct View {
    Camera camera;
    Image image;
    std::string file;
};

struct SceneDataset {
    std::vector<View> views;
    std::optional<std::vector<Image>> stylized_views;
    Bounds bounds;
    Vec3 background = Vec3::Ones();

    [[nodiscard]] std::vector<Image> images() const {
        std::vector<Image> out;
        out.reserve(views.size());
        for (const auto& v : views) out.push_back(v.image);
        return out;
    }
    [[nodiscard]] std::vector<Camera> cameras() const {
        std::vector<Camera> out;
        out.reserve(views.size());
        for (const auto& v : views) out.push_back(v.camera);
        return out;
    }
};

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw Error(std::string("corrupt manifest: missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("corrupt manifest: field '") + key + "': " + e.what());
    }
}

inline Vec3 json_vec3(const nlohmann::json& j, const char* key) {
    const auto v = json_get<std::vector<double>>(j, key);
    if (v.size() != 3) throw Error(std::string("corrupt manifest: '") + key + "' must have 3 entries");
    return {v[0], v[1], v[2]};
}

}  // namespace detail

/// Parsed manifest without pixel data.
struct SceneManifest {
    int width = 0;
    int height = 0;
    double focal = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Bounds bounds;
    Vec3 background = Vec3::Ones();
    std::vector<std::string> files;
    std::vector<Pose> poses;
    std::optional<std::string> stylized_dir;

    [[nodiscard]] Camera camera(std::size_t i) const {
        Camera c;
        c.width = width;
        c.height = height;
        c.focal = focal;
        c.cx = cx;
        c.cy = cy;
        c.pose = poses.at(i);
        return c;
    }
    [[nodiscard]] std::vector<Camera> cameras() const {
        std::vector<Camera> out;
        for (std::size_t i = 0; i < poses.size(); ++i) out.push_back(camera(i));
        return out;
    }
};

inline SceneManifest parse_manifest(const nlohmann::json& j, double rotation_tol = 1e-4) {
    SceneManifest m;
    m.width = detail::json_get<int>(j, "width");
    m.height = detail::json_get<int>(j, "height");
    m.focal = detail::json_get<double>(j, "focal");
    m.cx = detail::json_get<double>(j, "cx");
    m.cy = detail::json_get<double>(j, "cy");
    m.bounds.min = detail::json_vec3(j, "bounds_min");
    m.bounds.max = detail::json_vec3(j, "bounds_max");
    if (j.contains("background")) m.background = detail::json_vec3(j, "background");
    if (j.contains("stylized_dir")) m.stylized_dir = detail::json_get<std::string>(j, "stylized_dir");
    if (m.width < 1 || m.height < 1) throw Error("corrupt manifest: width and height must be >= 1");
    if (!(m.focal > 0.0)) throw Error("corrupt manifest: focal must be > 0");
    if ((m.bounds.max.array() <= m.bounds.min.array()).any()) throw Error("corrupt manifest: empty bounds");
    if (!j.contains("frames") || !j.at("frames").is_array()) throw Error("corrupt manifest: missing frames");
    for (const auto& f : j.at("frames")) {
        m.files.push_back(detail::json_get<std::string>(f, "file"));
        const auto t = detail::json_get<std::vector<double>>(f, "transform");
        if (t.size() != 12) throw Error("corrupt manifest: transform must have 12 numbers");
        Pose p;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) p(r, c) = t[static_cast<std::size_t>(r * 4 + c)];
        Camera cam;
        cam.pose = p;
        if (cam.orthonormality_error() > rotation_tol) {
            throw Error("non-orthonormal rotation in frame '" + m.files.back() + "'");
        }
        m.poses.push_back(p);
    }
    return m;
}

inline nlohmann::json manifest_to_json(const SceneManifest& m) {
    nlohmann::json j;
    j["width"] = m.width;
    j["height"] = m.height;
    j["focal"] = m.focal;
    j["cx"] = m.cx;
    j["cy"] = m.cy;
    j["bounds_min"] = {m.bounds.min.x(), m.bounds.min.y(), m.bounds.min.z()};
    j["bounds_max"] = {m.bounds.max.x(), m.bounds.max.y(), m.bounds.max.z()};
    j["background"] = {m.background.x(), m.background.y(), m.background.z()};
    if (m.stylized_dir) j["stylized_dir"] = *m.stylized_dir;
    j["frames"] = nlohmann::json::array();
    for (std::size_t i = 0; i < m.files.size(); ++i) {
        std::vector<double> t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) t.push_back(m.poses[i](r, c));
        j["frames"].push_back({{"file", m.files[i]}, {"transform", t}});
    }
    return j;
}

inline SceneManifest read_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("missing manifest '" + file.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("corrupt manifest '" + file.string() + "': " + e.what());
    }
    return parse_manifest(j);
}

inline void write_manifest(const SceneManifest& m, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot write manifest '" + file.string() + "'");
    out << manifest_to_json(m).dump(2) << '\n';
}

/// Loads a stylized image set: files with the manifest's names inside `dir`.
inline std::vector<Image> load_stylized_dir(const SceneManifest& m, const std::filesystem::path& dir) {
    std::vector<Image> out;
    for (const auto& file : m.files) {
        const auto path = dir / std::filesystem::path(file).filename();
        if (!std::filesystem::exists(path)) throw Error("missing image '" + path.string() + "'");
        Image img = read_image(path);
        if (img.width != m.width || img.height != m.height) {
            throw Error("image size mismatch for stylized view '" + path.string() + "'");
        }
        out.push_back(std::move(img));
    }
    return out;
}

/// Loads `dir/scene.json` and every referenced image (pixels in [0,1], used as stored).
inline SceneDataset load_scene(const std::filesystem::path& dir) {
    const SceneManifest m = read_manifest(dir / "scene.json");
    SceneDataset ds;
    ds.bounds = m.bounds;
    ds.background = m.background;
    for (std::size_t i = 0; i < m.files.size(); ++i) {
        const auto path = dir / m.files[i];
        if (!std::filesystem::exists(path)) throw Error("missing image '" + path.string() + "'");
        View v;
        v.camera = m.camera(i);
        v.image = read_image(path);
        v.file = m.files[i];
        if (v.image.width != m.width || v.image.height != m.height) {
            throw Error("image size mismatch for '" + path.string() + "'");
        }
        ds.views.push_back(std::move(v));
    }
    if (m.stylized_dir) ds.stylized_views = load_stylized_dir(m, dir / *m.stylized_dir);
    return ds;
}

}  // namespace liprf
