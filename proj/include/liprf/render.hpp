#pragma once

// Ray generation, uniform-sample volume rendering and the closed-form adjoints
// used by training.
//
// Samples: t_i = t_near + (i-1)(t_far - t_near)/T, delta_i = t_{i+1} - t_i with
// t_{T+1} = t_far, w_i = T_i (1 - exp(-sigma_i delta_i)), T_i = exp(-sum_{j<i}
// sigma_j delta_j). The leftover transmittance w_bg composites the background
// color, so sum_i w_i + w_bg = 1 on every ray.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "liprf/camera.hpp"
#include "liprf/common.hpp"
#include "liprf/field.hpp"
#include "liprf/image.hpp"

namespace liprf {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 dir = Vec3::UnitZ();
    double t_near = 0.0;
    double t_far = 0.0;
    int samples = 0;  // 0 when the ray misses the scene bounds

    [[nodiscard]] Vec3 at(double t) const { return origin + t * dir; }
    [[nodiscard]] bool hits() const { return samples > 0; }
};

struct RenderOptions {
    int samples = 128;
    Vec3 background = Vec3::Ones();
};

/// Slab intersection of a ray with an axis-aligned box. Returns false on a miss.
inline bool intersect_box(const Vec3& o, const Vec3& d, const Bounds& b, double& t0, double& t1) {
    t0 = 0.0;
    t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < b.min[a] || o[a] > b.max[a]) return false;
            continue;
        }
        const double inv = 1.0 / d[a];
        double ta = (b.min[a] - o[a]) * inv;
        double tb = (b.max[a] - o[a]) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

/// Ray through continuous image coordinates (px, py), clipped to `bounds`.
inline Ray generate_ray_at(const Camera& cam, double px, double py, const Bounds& bounds, int samples) {
    Ray r;
    r.origin = cam.position();
    r.dir = cam.direction_through(px, py).normalized();
    double t0 = 0.0, t1 = 0.0;
    if (samples > 0 && intersect_box(r.origin, r.dir, bounds, t0, t1)) {
        r.t_near = t0;
        r.t_far = t1;
        r.samples = samples;
    }
    return r;
}

/// Ray through the center of pixel (u, v).
inline Ray generate_ray(const Camera& cam, int u, int v, const Bounds& bounds, int samples = 128) {
    return generate_ray_at(cam, u + 0.5, v + 0.5, bounds, samples);
}

/// One marched sample: cell location, segment geometry, density and weight.
struct MarchSample {
    CellLocation loc;
    double t = 0.0;
    double delta = 0.0;
    double sigma = 0.0;
    double weight = 0.0;
    double trans_after = 1.0;  // T_{i+1}
};

/// Marches the ray through the density grid. Returns the background weight.
inline double march_ray(const Ray& ray, const VoxelField& field, std::vector<MarchSample>& out) {
    out.clear();
    if (!ray.hits()) return 1.0;
    const int n = ray.samples;
    const double step = (ray.t_far - ray.t_near) / n;
    const auto off = field.corner_offsets();
    const auto& dens = field.density();
    double trans = 1.0;
    out.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        MarchSample& s = out[static_cast<std::size_t>(i)];
        s.t = ray.t_near + i * step;
        const double t_next = (i + 1 == n) ? ray.t_far : ray.t_near + (i + 1) * step;
        s.delta = t_next - s.t;
        s.loc = field.locate(ray.at(s.t));
        s.sigma = 0.0;
        if (s.loc.inside) {
            const auto w = trilinear_weights(s.loc.fx, s.loc.fy, s.loc.fz);
            for (int c = 0; c < 8; ++c) s.sigma += w[c] * dens[static_cast<std::size_t>(s.loc.base + off[c])];
        }
        const double decay = std::exp(-s.sigma * s.delta);
        s.weight = trans * (1.0 - decay);
        trans *= decay;
        s.trans_after = trans;
    }
    return trans;
}

namespace detail {

/// acc[0..n) += w * src[0..n); fixed-size fast path for degree 2.
inline void axpy(double* acc, const double* src, double w, int n) {
    if (n == 3 * kMaxShCoeffs) {
        for (int q = 0; q < 3 * kMaxShCoeffs; ++q) acc[q] += w * src[q];
    } else {
        for (int q = 0; q < n; ++q) acc[q] += w * src[q];
    }
}

}  // namespace detail

/// Interpolated color at a marched sample. `sh_of(v)` yields the 3*l block of vertex v.
template <class ShSource>
inline Vec3 sample_color(const VoxelField& field, const ShSource& sh_of, const CellLocation& loc,
                         const ShBasis& basis) {
    if (!loc.inside) return field.v_offset();
    const int l = field.sh_count();
    const auto off = field.corner_offsets();
    const auto w = trilinear_weights(loc.fx, loc.fy, loc.fz);
    double acc[3 * kMaxShCoeffs] = {};
    for (int k = 0; k < 8; ++k) {
        if (w[k] == 0.0) continue;
        detail::axpy(acc, sh_of(loc.base + off[k]), w[k], 3 * l);
    }
    return contract_sh(acc, basis, l) + field.v_offset();
}

inline auto field_sh_source(const VoxelField& field) {
    return [&field](std::int64_t v) { return field.sh_at(v); };
}

struct RenderCache {
    std::vector<double> t;  // T+1 entries, last is t_far
    std::vector<double> sigma;
    std::vector<Vec3> colors;
    std::vector<double> weights;
    double w_bg = 1.0;
};

/// Per-sample densities, colors and compositing weights along a ray.
inline RenderCache render_weights(const Ray& ray, const VoxelField& field) {
    RenderCache cache;
    std::vector<MarchSample> samples;
    cache.w_bg = march_ray(ray, field, samples);
    if (!ray.hits()) return cache;
    const ShBasis basis = eval_sh_basis(ray.dir, field.degree());
    const auto src = field_sh_source(field);
    for (const auto& s : samples) {
        cache.t.push_back(s.t);
        cache.sigma.push_back(s.sigma);
        cache.weights.push_back(s.weight);
        cache.colors.push_back(sample_color(field, src, s.loc, basis));
    }
    cache.t.push_back(ray.t_far);
    return cache;
}

/// C(r) = sum_i w_i c_i + w_bg * background with per-vertex SH taken from `sh_of`.
template <class ShSource>
inline Vec3 render_color_with(const Ray& ray, const VoxelField& field, const ShSource& sh_of,
                              const Vec3& background) {
    thread_local std::vector<MarchSample> samples;
    const double w_bg = march_ray(ray, field, samples);
    Vec3 c = w_bg * background;
    if (!ray.hits()) return c;
    const ShBasis basis = eval_sh_basis(ray.dir, field.degree());
    for (const auto& s : samples) {
        if (s.weight == 0.0) continue;
        c += s.weight * sample_color(field, sh_of, s.loc, basis);
    }
    return c;
}

inline Vec3 render_color(const Ray& ray, const VoxelField& field, const Vec3& background = Vec3::Ones()) {
    return render_color_with(ray, field, field_sh_source(field), background);
}

/// Expected depth: sum_i w_i * segment midpoint + w_bg * t_far.
inline double render_depth(const Ray& ray, const VoxelField& field) {
    thread_local std::vector<MarchSample> samples;
    const double w_bg = march_ray(ray, field, samples);
    double d = w_bg * ray.t_far;
    for (const auto& s : samples) d += s.weight * (s.t + 0.5 * s.delta);
    return d;
}

/// Volume rendering variance: distance between the rendered colors of two rays.
inline double vrr(const Ray& r1, const Ray& r2, const VoxelField& field, const Vec3& background = Vec3::Ones()) {
    if (r1.samples != r2.samples) throw Error("vrr: rays have different sample counts");
    return (render_color(r1, field, background) - render_color(r2, field, background)).norm();
}

struct RenderedView {
    Image image;      // clamped to [0,1]
    ScalarMap depth;  // expected depth along the ray
    ScalarMap opacity;  // 1 - w_bg
};

/// Renders every pixel of `cam`. Colors are clamped to [0,1] only here.
template <class ShSource>
inline RenderedView render_view_with(const Camera& cam, const VoxelField& field, const ShSource& sh_of,
                                     const RenderOptions& opts = {}) {
    RenderedView out{Image(cam.width, cam.height), ScalarMap(cam.width, cam.height),
                     ScalarMap(cam.width, cam.height)};
    const int n = cam.width * cam.height;
#pragma omp parallel
    {
        std::vector<MarchSample> samples;
#pragma omp for schedule(static)
        for (int p = 0; p < n; ++p) {
            const int u = p % cam.width, v = p / cam.width;
            const Ray ray = generate_ray(cam, u, v, field.bounds(), opts.samples);
            const double w_bg = march_ray(ray, field, samples);
            Vec3 c = w_bg * opts.background;
            double depth = w_bg * ray.t_far;
            if (ray.hits()) {
                const ShBasis basis = eval_sh_basis(ray.dir, field.degree());
                for (const auto& s : samples) {
                    depth += s.weight * (s.t + 0.5 * s.delta);
                    if (s.weight == 0.0) continue;
                    c += s.weight * sample_color(field, sh_of, s.loc, basis);
                }
            }
            out.image.set_pixel(u, v, c.cwiseMax(0.0).cwiseMin(1.0));
            out.depth.at(u, v) = depth;
            out.opacity.at(u, v) = 1.0 - w_bg;
        }
    }
    return out;
}

inline RenderedView render_view(const Camera& cam, const VoxelField& field, const RenderOptions& opts = {}) {
    return render_view_with(cam, field, field_sh_source(field), opts);
}

/// Adjoint of the compositing step for one ray.
///
/// Given per-sample colors and dL/dC, writes dL/dc_i = w_i dL/dC and
/// dL/dsigma_i = delta_i (T_{i+1} c_i - R_i) . dL/dC, with R_i the color
/// composited behind sample i (including the background).
inline void composite_adjoint(const std::vector<MarchSample>& samples, const std::vector<Vec3>& colors,
                              double w_bg, const Vec3& background, const Vec3& grad_c,
                              std::vector<double>& grad_sigma, std::vector<Vec3>& grad_color) {
    const std::size_t n = samples.size();
    grad_sigma.assign(n, 0.0);
    grad_color.assign(n, Vec3::Zero());
    Vec3 behind = w_bg * background;
    for (std::size_t r = n; r-- > 0;) {
        const MarchSample& s = samples[r];
        grad_color[r] = s.weight * grad_c;
        grad_sigma[r] = s.delta * (s.trans_after * colors[r] - behind).dot(grad_c);
        behind += s.weight * colors[r];
    }
}

/// Adds tri_w * g_color (outer) basis into the per-vertex SH gradient buffer.
inline void scatter_sh_grad(const VoxelField& field, const CellLocation& loc, const Vec3& g_color,
                            const ShBasis& basis, double* grad_sh) {
    if (!loc.inside) return;
    const int l = field.sh_count();
    const int n = field.coeffs_per_vertex();
    const auto off = field.corner_offsets();
    const auto w = trilinear_weights(loc.fx, loc.fy, loc.fz);
    for (int k = 0; k < 8; ++k) {
        if (w[k] == 0.0) continue;
        double* g = grad_sh + (loc.base + off[k]) * n;
        for (int ch = 0; ch < 3; ++ch) {
            const double gc = w[k] * g_color[ch];
            for (int q = 0; q < l; ++q) g[ch * l + q] += gc * basis[static_cast<std::size_t>(q)];
        }
    }
}

}  // namespace liprf
