#pragma once

// Linear photorealistic color transfer: pooled pixel statistics, the
// Monge-Kantorovitch linear (MKL) map and its spectral norm K_est.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "liprf/common.hpp"
#include "liprf/image.hpp"
#include "liprf/scene_io.hpp"

namespace liprf::pst {

struct ColorStats {
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Zero();
    std::size_t count = 0;
};

struct ColorTransfer {
    Mat3 M = Mat3::Identity();
    Vec3 source_mean = Vec3::Zero();
    Vec3 target_mean = Vec3::Zero();
    double k_est = 1.0;
};

/// Pooled mean and population covariance (divisor N) over all pixels of all images.
/// Accumulates in image order, then pixel order.
inline ColorStats color_stats(std::span<const Image> images) {
    ColorStats s;
    for (const auto& img : images) s.count += img.pixel_count();
    if (s.count == 0) throw Error("color_stats: no pixels");
    Vec3 sum = Vec3::Zero();
    for (const auto& img : images)
        for (std::size_t p = 0; p < img.pixel_count(); ++p)
            sum += Vec3(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
    s.mean = sum / static_cast<double>(s.count);
    Mat3 acc = Mat3::Zero();
    for (const auto& img : images)
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            const Vec3 d = Vec3(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]) - s.mean;
            acc += d * d.transpose();
        }
    s.cov = acc / static_cast<double>(s.count);
    return s;
}

inline ColorStats color_stats(const Image& image) { return color_stats(std::span<const Image>(&image, 1)); }

namespace detail {

inline constexpr double kPsdEpsilon = 1e-5;

inline void check_symmetric(const Mat3& m, const char* name) {
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
        throw Error(std::string("mkl_matrix: ") + name + " is not symmetric");
    }
}

/// Symmetrizes and adds eps*I when the smallest eigenvalue is below eps.
inline Mat3 regularize(const Mat3& m) {
    Mat3 s = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(s);
    if (es.eigenvalues().minCoeff() < kPsdEpsilon) s += kPsdEpsilon * Mat3::Identity();
    return s;
}

/// Symmetric matrix power via eigendecomposition; eigenvalues clipped at zero.
inline Mat3 sym_power(const Mat3& m, double p) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(m);
    Vec3 ev = es.eigenvalues();
    for (int i = 0; i < 3; ++i) ev[i] = std::pow(std::max(ev[i], 0.0), p);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// M = S_I^{-1/2} (S_I^{1/2} S_S S_I^{1/2})^{1/2} S_I^{-1/2}; maps N(., S_I) onto N(., S_S).
inline Mat3 mkl_matrix(const Mat3& cov_source, const Mat3& cov_target) {
    detail::check_symmetric(cov_source, "source covariance");
    detail::check_symmetric(cov_target, "target covariance");
    const Mat3 a = detail::regularize(cov_source);
    const Mat3 b = detail::regularize(cov_target);
    const Mat3 a_half = detail::sym_power(a, 0.5);
    const Mat3 a_inv_half = detail::sym_power(a, -0.5);
    Mat3 c = a_half * b * a_half;
    c = 0.5 * (c + c.transpose());
    const Mat3 m = a_inv_half * detail::sym_power(c, 0.5) * a_inv_half;
    return 0.5 * (m + m.transpose());
}

/// Largest singular value of M by power iteration on MᵀM, to relative 1e-8.
inline double estimate_kest(const Mat3& M) {
    const Mat3 g = M.transpose() * M;
    if (g.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    Vec3 x(1.0, 0.7548776662466927, 0.5698402909980532);  // fixed, generic start
    x.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
        Vec3 y = g * x;
        const double ny = y.norm();
        if (ny == 0.0) {
            // Start vector in the null space; restart along a basis axis.
            x = Vec3::Unit(it % 3);
            continue;
        }
        const double next = x.dot(y);
        x = y / ny;
        if (it > 2 && std::abs(next - lambda) <= 1e-17 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient at the converged vector.
    lambda = x.dot(g * x);
    return std::sqrt(std::max(lambda, 0.0));
}

inline bool degenerate_covariance(const Mat3& cov) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (cov + cov.transpose()));
    return es.eigenvalues().maxCoeff() < 1e-8;
}

/// Transfer between two pooled statistics. A degenerate target (near-zero
/// covariance) falls back to a mean shift with M = I.
inline ColorTransfer make_transfer(const ColorStats& source, const ColorStats& target) {
    ColorTransfer t;
    t.source_mean = source.mean;
    t.target_mean = target.mean;
    t.M = degenerate_covariance(target.cov) ? Mat3::Identity() : mkl_matrix(source.cov, target.cov);
    t.k_est = estimate_kest(t.M);
    return t;
}

/// Per pixel: M (p - mean_src) + mean_tgt. Output is not clamped.
inline Image apply_transfer(const Image& image, const ColorTransfer& t) {
    Image out = image;
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        const Vec3 px(image.data[3 * p], image.data[3 * p + 1], image.data[3 * p + 2]);
        const Vec3 q = t.M * (px - t.source_mean) + t.target_mean;
        out.data[3 * p] = q.x();
        out.data[3 * p + 1] = q.y();
        out.data[3 * p + 2] = q.z();
    }
    return out;
}

enum class StylizeMode { Global, PerView };

struct StylizedViews {
    std::vector<Image> images;  // unclamped
    std::vector<ColorTransfer> transfers;  // one per view
};

/// MKL stylization of every view towards `style`. Global mode pools statistics
/// over all views (one shared map); per-view mode computes an independent map per view.
inline StylizedViews stylize_views(const SceneDataset& dataset, const Image& style, StylizeMode mode) {
    if (dataset.views.empty()) throw Error("stylize_views: empty dataset");
    const ColorStats target = color_stats(style);
    StylizedViews out;
    if (mode == StylizeMode::Global) {
        const auto imgs = dataset.images();
        const ColorTransfer t = make_transfer(color_stats(imgs), target);
        for (const auto& v : dataset.views) {
            out.images.push_back(apply_transfer(v.image, t));
            out.transfers.push_back(t);
        }
    } else {
        for (const auto& v : dataset.views) {
            const ColorTransfer t = make_transfer(color_stats(v.image), target);
            out.images.push_back(apply_transfer(v.image, t));
            out.transfers.push_back(t);
        }
    }
    return out;
}

/// K_est from the global MKL map between the source views and their stylized counterparts.
inline double kest_between(std::span<const Image> source, std::span<const Image> stylized) {
    const ColorStats a = color_stats(source);
    const ColorStats b = color_stats(stylized);
    return estimate_kest(degenerate_covariance(b.cov) ? Mat3::Identity() : mkl_matrix(a.cov, b.cov));
}

}  // namespace liprf::pst
