#pragma once

// PSNR and temporal consistency between views. Correspondences come from
// rendered depth: a pixel of view i is unprojected at its depth and
// reprojected into view j.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "liprf/camera.hpp"
#include "liprf/common.hpp"
#include "liprf/image.hpp"

namespace liprf {

inline constexpr double kMetricCap = 99.0;
inline constexpr double kOcclusionTau = 1e-2;

/// For every pixel of view i: sub-pixel target coordinates in view j and a binary validity mask.
struct WarpField {
    int width = 0;
    int height = 0;
    std::vector<double> x;  // continuous image coordinates in view j (pixel centers at +0.5)
    std::vector<double> y;
    std::vector<std::uint8_t> mask;

    WarpField() = default;
    WarpField(int w, int h)
        : width(w), height(h), x(static_cast<std::size_t>(w) * h, 0.0), y(static_cast<std::size_t>(w) * h, 0.0),
          mask(static_cast<std::size_t>(w) * h, 0) {}

    [[nodiscard]] std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
    [[nodiscard]] std::size_t mask_count() const {
        std::size_t n = 0;
        for (auto m : mask) n += m;
        return n;
    }
};

namespace detail {

// Projections of pixel centers land a few ulps off the grid.
inline constexpr double kEdgeSlack = 1e-9;

inline bool inside_support(double gx, double gy, int w, int h) {
    return gx >= -kEdgeSlack && gy >= -kEdgeSlack && gx <= w - 1 + kEdgeSlack && gy <= h - 1 + kEdgeSlack;
}
inline double snap_to_grid(double g) {
    const double r = std::round(g);
    return std::abs(g - r) <= kEdgeSlack ? r : g;
}

}  // namespace detail

/// Bilinear sample at continuous coordinates (pixel centers at +0.5).
/// Returns false when the 2x2 support leaves the frame.
inline bool bilinear_sample(const Image& img, double px, double py, Vec3& out) {
    double gx = px - 0.5, gy = py - 0.5;
    if (!detail::inside_support(gx, gy, img.width, img.height)) return false;
    gx = std::clamp(detail::snap_to_grid(gx), 0.0, img.width - 1.0);
    gy = std::clamp(detail::snap_to_grid(gy), 0.0, img.height - 1.0);
    int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
    x0 = std::min(x0, std::max(img.width - 2, 0));
    y0 = std::min(y0, std::max(img.height - 2, 0));
    const double fx = gx - x0, fy = gy - y0;
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    out = (1 - fx) * (1 - fy) * img.pixel(x0, y0) + fx * (1 - fy) * img.pixel(x1, y0) +
          (1 - fx) * fy * img.pixel(x0, y1) + fx * fy * img.pixel(x1, y1);
    return true;
}

/// Warp from view i to view j using depth along normalized rays (non-finite = no surface).
/// Pixels are masked out when they have no surface, project behind camera j or
/// outside its frame (including bilinear support), or lie farther from camera j
/// than its own depth by more than `occlusion_tol`.
inline WarpField analytic_warp(const ScalarMap& depth_i, const Camera& cam_i, const Camera& cam_j,
                               const ScalarMap& depth_j, double occlusion_tol) {
    if (depth_i.width != cam_i.width || depth_i.height != cam_i.height || depth_j.width != cam_j.width ||
        depth_j.height != cam_j.height) {
        throw Error("analytic_warp: depth map does not match its camera");
    }
    for (const Camera* c : {&cam_i, &cam_j})
        if (!(c->focal > 0.0) || c->orthonormality_error() > 1e-4) throw Error("analytic_warp: degenerate camera");
    WarpField w(cam_i.width, cam_i.height);
    const Vec3 oj = cam_j.position();
    for (int v = 0; v < cam_i.height; ++v)
        for (int u = 0; u < cam_i.width; ++u) {
            const double d = depth_i.at(u, v);
            if (!std::isfinite(d)) continue;
            const Vec3 p = cam_i.position() + d * cam_i.direction_through(u + 0.5, v + 0.5).normalized();
            double px = 0.0, py = 0.0;
            if (!cam_j.project(p, px, py)) continue;
            if (!detail::inside_support(px - 0.5, py - 0.5, cam_j.width, cam_j.height)) continue;
            const int qx = std::clamp(static_cast<int>(std::floor(px)), 0, cam_j.width - 1);
            const int qy = std::clamp(static_cast<int>(std::floor(py)), 0, cam_j.height - 1);
            const double dj = depth_j.at(qx, qy);
            if ((p - oj).norm() > dj + occlusion_tol) continue;
            const std::size_t k = w.index(u, v);
            w.x[k] = px;
            w.y[k] = py;
            w.mask[k] = 1;
        }
    return w;
}

/// Masked mean squared error between x_i and x_j sampled at the warped
/// coordinates; normalized by mask count times 3 channels.
inline double temporal_consistency(const Image& x_i, const Image& x_j, const WarpField& warp) {
    if (x_i.width != warp.width || x_i.height != warp.height) throw Error("temporal_consistency: size mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (int v = 0; v < warp.height; ++v)
        for (int u = 0; u < warp.width; ++u) {
            const std::size_t k = warp.index(u, v);
            if (!warp.mask[k]) continue;
            Vec3 q;
            if (!bilinear_sample(x_j, warp.x[k], warp.y[k], q)) continue;
            sum += (x_i.pixel(u, v) - q).squaredNorm();
            ++n;
        }
    if (n == 0) throw Error("temporal_consistency: no overlap");
    return sum / (3.0 * static_cast<double>(n));
}

inline double tc_psnr(double tc) {
    if (tc < 0.0 || std::isnan(tc)) throw Error("tc_psnr: negative input");
    if (tc == 0.0) return kMetricCap;
    return -10.0 * std::log10(tc);
}

inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw Error("psnr: image size mismatch");
    if (a.data.empty()) throw Error("psnr: empty image");
    double sse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.data.size());
    return mse == 0.0 ? kMetricCap : std::min(kMetricCap, -10.0 * std::log10(mse));
}

enum class Span { Short, Long };

inline int span_stride(Span s) { return s == Span::Short ? 1 : 5; }

struct PairScore {
    std::size_t i = 0;
    std::size_t j = 0;
    double tc = 0.0;
    double tc_psnr = 0.0;
};

struct ConsistencyReport {
    std::vector<PairScore> pairs;
    double mean_tc_psnr = 0.0;
};

/// Mean tc_psnr over the pairs (x_i, x_{i+stride}).
inline ConsistencyReport consistency_report(const std::vector<Image>& images, const std::vector<Camera>& cameras,
                                            const std::vector<ScalarMap>& depths, Span span, double scene_scale) {
    const auto stride = static_cast<std::size_t>(span_stride(span));
    if (images.size() != cameras.size() || images.size() != depths.size()) {
        throw Error("consistency_report: images, cameras and depths differ in count");
    }
    if (images.size() <= stride) throw Error("consistency_report: fewer views than the span");
    ConsistencyReport rep;
    rep.pairs.resize(images.size() - stride);
    std::vector<std::string> errors(rep.pairs.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < rep.pairs.size(); ++i) {
        const std::size_t j = i + stride;
        try {
            const WarpField w =
                analytic_warp(depths[i], cameras[i], cameras[j], depths[j], kOcclusionTau * scene_scale);
            const double tc = temporal_consistency(images[i], images[j], w);
            rep.pairs[i] = {i, j, tc, tc_psnr(tc)};
        } catch (const std::exception& e) {
            errors[i] = "pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw Error("consistency_report: " + e);
    for (const auto& p : rep.pairs) rep.mean_tc_psnr += p.tc_psnr;
    rep.mean_tc_psnr /= static_cast<double>(rep.pairs.size());
    return rep;
}

/// Depth with pixels of opacity below 0.5 marked as having no surface.
inline ScalarMap surface_depth(const ScalarMap& depth, const ScalarMap& opacity) {
    ScalarMap out = depth;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (opacity.data[i] < 0.5) out.data[i] = std::numeric_limits<double>::infinity();
    return out;
}

}  // namespace liprf
