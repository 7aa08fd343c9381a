#pragma once

// Randomized numerical certification of the rendering bounds, the SH
// exchange identity, the network Lipschitz bound, and the hand-written
// gradients (finite differences and GGA against a single-graph reference).
//
// Spectral norms in bounds come from a full SVD, not from power iteration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "liprf/common.hpp"
#include "liprf/field.hpp"
#include "liprf/lipnet.hpp"
#include "liprf/render.hpp"
#include "liprf/train.hpp"

namespace liprf::verify {

struct TrialReport {
    std::string suite;
    std::int64_t trials = 0;
    std::int64_t violations = 0;
    double max_ratio = 0.0;  // observed / bound
    double tolerance = 0.0;
    std::uint64_t seed = 0;
    double max_abs_dev = 0.0;  // identity suites: largest absolute deviation

    [[nodiscard]] bool passed() const { return violations == 0; }
    bool operator==(const TrialReport&) const = default;
};

namespace detail {

/// Independent stream per trial so results do not depend on scheduling.
inline std::mt19937_64 trial_rng(std::uint64_t seed, std::int64_t trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(static_cast<std::uint64_t>(trial) >> 32)};
    return std::mt19937_64(seq);
}

inline double spectral_norm(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

inline Eigen::VectorXd simplex(std::mt19937_64& rng, int n) {
    std::exponential_distribution<double> e(1.0);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = e(rng);
    return w / w.sum();
}

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = g(rng);
    return m;
}

inline Eigen::MatrixXd uniform(std::mt19937_64& rng, int r, int c, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    return m;
}

inline Vec3 unit_vector(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 d;
    do d = Vec3(g(rng), g(rng), g(rng));
    while (d.norm() < 1e-6);
    return d.normalized();
}

/// Folds one observation into a report. `bound` already excludes the tolerance.
struct Tally {
    std::int64_t violations = 0;
    double max_ratio = 0.0;
    double max_abs_dev = 0.0;

    void bound(double observed, double bound, double tol) {
        if (observed > bound + tol) ++violations;
        double ratio = 0.0;
        if (bound > 0.0) ratio = observed / bound;
        else if (observed > tol) ratio = std::numeric_limits<double>::infinity();
        max_ratio = std::max(max_ratio, ratio);
    }
    void merge(const Tally& o) {
        violations += o.violations;
        max_ratio = std::max(max_ratio, o.max_ratio);
        max_abs_dev = std::max(max_abs_dev, o.max_abs_dev);
    }
};

template <class TrialFn>
TrialReport run_trials(const std::string& name, std::int64_t trials, std::uint64_t seed, double tol, TrialFn fn) {
    Tally total;
#pragma omp parallel
    {
        Tally local;
#pragma omp for schedule(dynamic, 256)
        for (std::int64_t t = 0; t < trials; ++t) {
            auto rng = trial_rng(seed, t);
            fn(rng, local);
        }
#pragma omp critical
        total.merge(local);
    }
    TrialReport r;
    r.suite = name;
    r.trials = trials;
    r.violations = total.violations;
    r.max_ratio = total.max_ratio;
    r.tolerance = tol;
    r.seed = seed;
    r.max_abs_dev = total.max_abs_dev;
    return r;
}

}  // namespace detail

inline constexpr double kExactTol = 1e-9;
inline constexpr double kIdentityTol = 1e-10;
inline constexpr double kSpectralTol = 1e-6;
inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdRelTol = 1e-4;
inline constexpr double kFdAbsFloor = 1e-8;
inline constexpr double kGgaRelTol = 1e-5;

/// Rendered color of composited per-sample colors (columns of `c`) with weights summing to 1.
inline Vec3 composite(const Eigen::VectorXd& w, const Eigen::MatrixXd& c) { return c * w; }

/// Affine color map c -> A c + b applied per sample: vrr(F') <= ‖A‖₂ vrr(F).
inline TrialReport check_prop1(std::int64_t trials, std::uint64_t seed) {
    return detail::run_trials("prop1", trials, seed, kExactTol, [](std::mt19937_64& rng, detail::Tally& tally) {
        const int T = std::uniform_int_distribution<int>(2, 16)(rng);
        const Eigen::VectorXd w1 = detail::simplex(rng, T), w2 = detail::simplex(rng, T);
        const Eigen::MatrixXd c1 = detail::uniform(rng, 3, T, 0.0, 1.0), c2 = detail::uniform(rng, 3, T, 0.0, 1.0);
        const Eigen::MatrixXd A = detail::gaussian(rng, 3, 3);
        const Eigen::Vector3d b = detail::gaussian(rng, 3, 1);
        const double vrr = (composite(w1, c1) - composite(w2, c2)).norm();
        const Eigen::MatrixXd c1p = (A * c1).colwise() + b, c2p = (A * c2).colwise() + b;
        const double vrr_p = (composite(w1, c1p) - composite(w2, c2p)).norm();
        tally.bound(vrr_p, detail::spectral_norm(A) * vrr, kExactTol);
    });
}

/// Bias-free ReLU MLP (output bias allowed) applied per sample. The premise
/// max_i ‖w¹_i c¹_i - w²_i c²_i‖ < ε/T is built constructively: c² is chosen so
/// each weighted difference is a random vector shorter than ε/T.
inline TrialReport check_prop2(std::int64_t trials, std::uint64_t seed, int min_layers = 2, int max_layers = 4) {
    return detail::run_trials("prop2", trials, seed, kExactTol, [=](std::mt19937_64& rng, detail::Tally& tally) {
        NetConfig nc;
        nc.in_dim = 3;
        nc.out_dim = 3;
        nc.layers = std::uniform_int_distribution<int>(min_layers, max_layers)(rng);
        nc.width = std::uniform_int_distribution<int>(3, 12)(rng);
        nc.activation = Activation::Relu;
        nc.hidden_bias = false;
        LipschitzNet net = LipschitzNet::create(nc, 1.0, rng());
        std::uniform_real_distribution<double> kdist(0.2, 2.0);
        for (std::size_t i = 0; i < net.layer_count(); ++i) net.layer(i).K = kdist(rng);
        net.layer(net.layer_count() - 1).bias = detail::gaussian(rng, 3, 1);
        double K = 1.0;
        for (std::size_t i = 0; i < net.layer_count(); ++i) K *= detail::spectral_norm(net.effective_weight(i));

        const int T = std::uniform_int_distribution<int>(2, 16)(rng);
        // Weights bounded away from zero keep c² = (w¹c¹ + δ)/w² well scaled.
        const Eigen::VectorXd w1 = 0.5 * detail::simplex(rng, T).array() + 0.5 / T;
        const Eigen::VectorXd w2 = 0.5 * detail::simplex(rng, T).array() + 0.5 / T;
        const Eigen::MatrixXd c1 = detail::uniform(rng, 3, T, 0.0, 1.0);
        const double eps = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 0.0)(rng));
        std::uniform_real_distribution<double> frac(0.0, 1.0);
        Eigen::MatrixXd c2(3, T);
        for (int i = 0; i < T; ++i) {
            const Vec3 delta = detail::unit_vector(rng) * (frac(rng) * eps / T);
            c2.col(i) = (w1[i] * c1.col(i) + delta) / w2[i];
        }
        const Eigen::MatrixXd y1 = net.forward(c1), y2 = net.forward(c2);
        const double vrr_p = (composite(w1, y1) - composite(w2, y2)).norm();
        tally.bound(vrr_p, K * eps, kExactTol);
    });
}

/// Affine map on SH coefficient matrices F'_sh = A F_sh + b.
/// General bound: vrr(F') <= ‖A‖₂ ε₁ + ‖b‖₂ ε₂. With b zero outside column 0
/// the tighter bound ‖A‖₂ ε₁ is checked as well; each trial counts both.
inline TrialReport check_prop3(std::int64_t trials, std::uint64_t seed) {
    return detail::run_trials("prop3", trials, seed, kExactTol, [](std::mt19937_64& rng, detail::Tally& tally) {
        const int l = kMaxShCoeffs;
        const int T = std::uniform_int_distribution<int>(2, 16)(rng);
        const Vec3 v = detail::uniform(rng, 3, 1, 0.0, 1.0);
        const Vec3 d1 = detail::unit_vector(rng), d2 = detail::unit_vector(rng);
        const ShBasis g1a = eval_sh_basis(d1, 2), g2a = eval_sh_basis(d2, 2);
        const Eigen::VectorXd g1 = Eigen::Map<const Eigen::VectorXd>(g1a.data(), l);
        const Eigen::VectorXd g2 = Eigen::Map<const Eigen::VectorXd>(g2a.data(), l);
        const Eigen::VectorXd w1 = detail::simplex(rng, T), w2 = detail::simplex(rng, T);
        std::vector<Eigen::MatrixXd> s1, s2;
        for (int i = 0; i < T; ++i) {
            s1.push_back(detail::gaussian(rng, 3, l, 0.5));
            s2.push_back(detail::gaussian(rng, 3, l, 0.5));
        }
        const Eigen::MatrixXd A = detail::gaussian(rng, 3, 3);
        const Eigen::MatrixXd b_full = detail::gaussian(rng, 3, l);
        Eigen::MatrixXd b_dc = Eigen::MatrixXd::Zero(3, l);
        b_dc.col(0) = detail::gaussian(rng, 3, 1);

        auto render = [&](const Eigen::MatrixXd& M, const Eigen::MatrixXd& b, const std::vector<Eigen::MatrixXd>& s,
                          const Eigen::VectorXd& w, const Eigen::VectorXd& g) {
            Vec3 c = Vec3::Zero();
            for (int i = 0; i < T; ++i) c += w[i] * ((M * s[static_cast<std::size_t>(i)] + b) * g + v);
            return c;
        };
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
        const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, l);
        const double eps1 = (render(I, Z, s1, w1, g1) - render(I, Z, s2, w2, g2)).norm();
        const double eps2 = (g1 - g2).norm();
        const double kA = detail::spectral_norm(A);
        const double general = (render(A, b_full, s1, w1, g1) - render(A, b_full, s2, w2, g2)).norm();
        tally.bound(general, kA * eps1 + detail::spectral_norm(b_full) * eps2, kExactTol);
        const double tight = (render(A, b_dc, s1, w1, g1) - render(A, b_dc, s2, w2, g2)).norm();
        tally.bound(tight, kA * eps1, kExactTol);
    });
}

/// A(F_sh Γ + v) + b == (A F_sh + 2√π[Av + b - v, 0]) Γ + v, and the inverse
/// form (A F_sh + [b, 0]) Γ + v == A(F_sh Γ + v) + b/(2√π) + v - A v.
inline TrialReport check_lemma2(std::int64_t trials, std::uint64_t seed, int degree = 2) {
    return detail::run_trials("lemma2", trials, seed, kIdentityTol, [=](std::mt19937_64& rng, detail::Tally& tally) {
        const int l = sh_coeff_count(degree);
        const Eigen::MatrixXd F = detail::gaussian(rng, 3, l);
        const Vec3 v = detail::uniform(rng, 3, 1, 0.0, 1.0);
        const Eigen::Matrix3d A = detail::gaussian(rng, 3, 3);
        const Vec3 b = detail::gaussian(rng, 3, 1);
        const ShBasis ga = eval_sh_basis(detail::unit_vector(rng), degree);
        const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(ga.data(), l);
        const double two_sqrt_pi = 2.0 * std::sqrt(std::numbers::pi);

        const Vec3 lhs = A * (F * g + v) + b;
        Eigen::MatrixXd Fp = A * F;
        Fp.col(0) += two_sqrt_pi * (A * v + b - v);
        const Vec3 rhs = Fp * g + v;

        Eigen::MatrixXd Fq = A * F;
        Fq.col(0) += b;
        const Vec3 lhs_inv = Fq * g + v;
        const Vec3 rhs_inv = A * (F * g + v) + b / two_sqrt_pi + v - A * v;

        const double dev = std::max((lhs - rhs).cwiseAbs().maxCoeff(), (lhs_inv - rhs_inv).cwiseAbs().maxCoeff());
        tally.max_abs_dev = std::max(tally.max_abs_dev, dev);
        tally.bound(dev, 0.0, kIdentityTol);
        tally.max_ratio = std::max(tally.max_ratio, dev / kIdentityTol);
    });
}

/// Empirical Lipschitz ratios of random nets against prod_i ‖A_i‖₂.
/// One net per 10^4 input pairs; activations alternate between ReLU and sine.
inline TrialReport check_lemma1(std::int64_t trials, std::uint64_t seed, std::int64_t pairs_per_net = 10000) {
    const std::int64_t nets = std::max<std::int64_t>(1, (trials + pairs_per_net - 1) / pairs_per_net);
    TrialReport r = detail::run_trials("lemma1", nets, seed, kSpectralTol, [&](std::mt19937_64& rng, detail::Tally& tally) {
        NetConfig nc;
        nc.in_dim = std::uniform_int_distribution<int>(2, 8)(rng);
        nc.out_dim = std::uniform_int_distribution<int>(2, 8)(rng);
        nc.layers = std::uniform_int_distribution<int>(2, 4)(rng);
        nc.width = std::uniform_int_distribution<int>(4, 16)(rng);
        nc.activation = (rng() & 1) ? Activation::Sine : Activation::Relu;
        LipschitzNet net = LipschitzNet::create(nc, 1.0, rng());
        std::uniform_real_distribution<double> kdist(0.3, 2.0);
        for (std::size_t i = 0; i < net.layer_count(); ++i) net.layer(i).K = kdist(rng);
        double K = 1.0;
        for (std::size_t i = 0; i < net.layer_count(); ++i) K *= detail::spectral_norm(net.effective_weight(i));
        // Half far pairs, half near pairs (the latter probe the local slope).
        const auto n = static_cast<int>(std::min<std::int64_t>(pairs_per_net, std::max<std::int64_t>(trials, 1)));
        Eigen::MatrixXd x = detail::gaussian(rng, nc.in_dim, n, 2.0);
        Eigen::MatrixXd y = detail::gaussian(rng, nc.in_dim, n, 2.0);
        for (int i = 0; i < n / 2; ++i) y.col(i) = x.col(i) + 1e-3 * detail::gaussian(rng, nc.in_dim, 1);
        const Eigen::MatrixXd fx = net.forward(x), fy = net.forward(y);
        for (int i = 0; i < n; ++i) {
            const double dx = (x.col(i) - y.col(i)).norm();
            if (dx == 0.0) continue;
            const double ratio = (fx.col(i) - fy.col(i)).norm() / dx;
            tally.bound(ratio, K, kSpectralTol);
        }
    });
    r.trials = nets * pairs_per_net;
    return r;
}

namespace detail {

inline void fd_compare(double analytic, double numeric, Tally& t, std::int64_t& count) {
    ++count;
    const double err = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double allowed = kFdRelTol * scale + kFdAbsFloor;
    if (err > allowed) ++t.violations;
    t.max_ratio = std::max(t.max_ratio, err / allowed);
}

inline VoxelField random_field(std::mt19937_64& rng, int n, int degree, double zero_fraction) {
    VoxelField f({n, n, n}, Bounds{}, degree);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 0.5);
    for (double& d : f.density()) d = u(rng) < zero_fraction ? 0.0 : 3.0 * u(rng);
    for (double& s : f.sh()) s = g(rng);
    return f;
}

inline std::vector<Ray> random_rays(std::mt19937_64& rng, const Bounds& b, int count, int samples) {
    std::vector<Ray> rays;
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    while (static_cast<int>(rays.size()) < count) {
        const Vec3 eye = 3.0 * unit_vector(rng);
        const Vec3 target(u(rng), u(rng), u(rng));
        Ray r;
        r.origin = eye;
        r.dir = (target - eye).normalized();
        double t0 = 0.0, t1 = 0.0;
        if (!intersect_box(r.origin, r.dir, b, t0, t1)) continue;
        r.t_near = t0;
        r.t_far = t1;
        r.samples = samples;
        rays.push_back(r);
    }
    return rays;
}

}  // namespace detail

/// Central finite differences (h = 1e-4) against the hand-written backward
/// passes: network parameters, and per-vertex density and SH through render_color.
inline TrialReport check_gradients(std::uint64_t seed) {
    auto rng = detail::trial_rng(seed, -1);
    detail::Tally tally;
    std::int64_t count = 0;
    const double h = kFdStep;

    // Network parameters: loss = sum(G ⊙ f(X)).
    for (Activation act : {Activation::Sine, Activation::Relu}) {
        NetConfig nc;
        nc.in_dim = 5;
        nc.out_dim = 4;
        nc.layers = 3;
        nc.width = 6;
        nc.activation = act;
        nc.b_sq = 1e-3;
        LipschitzNet net = LipschitzNet::create(nc, 1.1, rng());
        const Eigen::MatrixXd X = detail::gaussian(rng, nc.in_dim, 7);
        const Eigen::MatrixXd G = detail::gaussian(rng, nc.out_dim, 7);
        ForwardCache cache;
        (void)net.forward(X, &cache);
        const std::vector<double> analytic = net.backward(cache, G).flatten();
        std::vector<double> p = net.parameters();
        // Activation pattern of a forward pass; a ReLU stencil is only meaningful when it does not cross a kink.
        auto pattern = [](const ForwardCache& c) {
            std::vector<bool> out;
            for (const auto& pre : c.pre)
                for (Eigen::Index i = 0; i < pre.size(); ++i) out.push_back(pre.data()[i] > 0.0);
            return out;
        };
        const std::vector<bool> base_pattern = pattern(cache);
        bool smooth = true;
        auto loss = [&](const std::vector<double>& q) {
            LipschitzNet m = net;
            m.set_parameters(q);
            ForwardCache c;
            const double v = (G.array() * m.forward(X, &c).array()).sum();
            if (act == Activation::Relu && pattern(c) != base_pattern) smooth = false;
            return v;
        };
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p[i];
            smooth = true;
            p[i] = keep + h;
            const double lp = loss(p);
            p[i] = keep - h;
            const double lm = loss(p);
            p[i] = keep;
            if (!smooth) continue;
            detail::fd_compare(analytic[i], (lp - lm) / (2.0 * h), tally, count);
        }
    }

    // Render: loss = g · C(r) for density and SH of every vertex.
    {
        VoxelField field = detail::random_field(rng, 4, 2, 0.2);
        const auto rays = detail::random_rays(rng, field.bounds(), 3, 24);
        const Vec3 bg = detail::uniform(rng, 3, 1, 0.0, 1.0);
        for (const Ray& ray : rays) {
            const Vec3 g = detail::gaussian(rng, 3, 1);
            std::vector<MarchSample> samples;
            const double w_bg = march_ray(ray, field, samples);
            const ShBasis basis = eval_sh_basis(ray.dir, field.degree());
            std::vector<Vec3> colors;
            for (const auto& s : samples) colors.push_back(sample_color(field, field_sh_source(field), s.loc, basis));
            std::vector<double> g_sigma;
            std::vector<Vec3> g_color;
            composite_adjoint(samples, colors, w_bg, bg, g, g_sigma, g_color);
            std::vector<std::vector<GradRecord>> rec(1);
            for (std::size_t s = 0; s < samples.size(); ++s) rec[0].push_back({samples[s].loc, g_sigma[s], g_color[s]});
            std::vector<double> gd(field.density().size(), 0.0), gs(field.sh().size(), 0.0);
            scatter_gradients(field, rec, {basis}, gs.data(), gd.data());

            auto loss = [&] { return g.dot(render_color(ray, field, bg)); };
            for (std::size_t i = 0; i < field.density().size(); ++i) {
                double& x = field.density()[i];
                const double keep = x;
                // Density is clamped at zero during training; the stencil must stay on the smooth side.
                if (keep < h) continue;
                x = keep + h;
                const double lp = loss();
                x = keep - h;
                const double lm = loss();
                x = keep;
                detail::fd_compare(gd[i], (lp - lm) / (2.0 * h), tally, count);
            }
            for (std::size_t i = 0; i < field.sh().size(); ++i) {
                double& x = field.sh()[i];
                const double keep = x;
                x = keep + h;
                const double lp = loss();
                x = keep - h;
                const double lm = loss();
                x = keep;
                detail::fd_compare(gs[i], (lp - lm) / (2.0 * h), tally, count);
            }
        }
    }

    TrialReport r;
    r.suite = "grad";
    r.trials = count;
    r.violations = tally.violations;
    r.max_ratio = tally.max_ratio;
    r.tolerance = kFdRelTol;
    r.seed = seed;
    return r;
}

/// Single-graph reference for gga_gradients: one forward over every vertex,
/// per-sample accumulation of dLoss/dsh_t into a dense matrix, one backward.
inline NetGradients gga_reference(const LipschitzNet& net, const VoxelField& field, const std::vector<Ray>& rays,
                                  const std::vector<Vec3>& targets, const GgaOptions& opt, double* objective = nullptr) {
    const int n = field.coeffs_per_vertex();
    const int l = field.sh_count();
    const std::int64_t V = field.vertex_count();
    Eigen::MatrixXd X(net_input_dim(field), V + 1);
    for (std::int64_t v = 0; v < V; ++v) fill_input(field, v, X.col(v).data());
    X.col(V) = background_input(field, opt.background);
    ForwardCache cache;
    const Eigen::MatrixXd Y = net.forward(X, &cache);
    const Vec3 bg = opt.stylize_background ? background_from_output(field, Y.col(V)) : opt.background;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, V + 1);
    double sse = 0.0;
    const auto off = field.corner_offsets();
    for (std::size_t r = 0; r < rays.size(); ++r) {
        std::vector<MarchSample> samples;
        const double w_bg = march_ray(rays[r], field, samples);
        const ShBasis basis = eval_sh_basis(rays[r].dir, field.degree());
        Vec3 c = w_bg * bg;
        for (const auto& s : samples) {
            if (!s.loc.inside) continue;
            const auto tw = trilinear_weights(s.loc.fx, s.loc.fy, s.loc.fz);
            for (int k = 0; k < 8; ++k)
                for (int ch = 0; ch < 3; ++ch)
                    for (int q = 0; q < l; ++q) c[ch] += s.weight * tw[k] * Y(ch * l + q, s.loc.base + off[k]) * basis[q];
            c += s.weight * field.v_offset();
        }
        const Vec3 e = c - targets[r];
        sse += e.squaredNorm();
        const Vec3 gc = 2.0 * e;
        for (const auto& s : samples) {
            if (!s.loc.inside) continue;
            const auto tw = trilinear_weights(s.loc.fx, s.loc.fy, s.loc.fz);
            for (int k = 0; k < 8; ++k)
                for (int ch = 0; ch < 3; ++ch)
                    for (int q = 0; q < l; ++q) G(ch * l + q, s.loc.base + off[k]) += s.weight * tw[k] * gc[ch] * basis[q];
        }
        if (opt.stylize_background)
            for (int ch = 0; ch < 3; ++ch) G(ch * l, V) += w_bg * gc[ch] * sh_const::c0;
    }
    G /= static_cast<double>(V);
    NetGradients g = net.backward(cache, G);
    net.add_lip_reg_grad(opt.k_est, opt.lambda, g);
    if (objective != nullptr) *objective = sse / static_cast<double>(V) + opt.lambda * net.lip_reg_loss(opt.k_est);
    return g;
}

/// Relative deviation max|a - b| / max|b|.
inline double relative_deviation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return scale == 0.0 ? diff : diff / scale;
}

/// GGA on an 8³ field with 16 rays against the single-graph reference, for
/// 1-, 2- and 7-way partitions, with and without a stylized background.
inline TrialReport check_gga(std::uint64_t seed) {
    auto rng = detail::trial_rng(seed, -2);
    detail::Tally tally;
    std::int64_t count = 0;
    for (bool stylize_bg : {false, true}) {
        VoxelField field = detail::random_field(rng, 8, 2, 0.5);
        const auto rays = detail::random_rays(rng, field.bounds(), 16, 32);
        std::vector<Vec3> targets;
        for (std::size_t i = 0; i < rays.size(); ++i) targets.push_back(detail::uniform(rng, 3, 1, 0.0, 1.0));
        NetConfig nc;
        nc.in_dim = net_input_dim(field);
        nc.out_dim = field.coeffs_per_vertex();
        nc.layers = 3;
        nc.width = 16;
        const LipschitzNet net = LipschitzNet::create(nc, 1.2, rng());
        GgaOptions opt;
        opt.lambda = 2e-4;
        opt.k_est = 1.3;
        opt.background = detail::uniform(rng, 3, 1, 0.0, 1.0);
        opt.stylize_background = stylize_bg;
        double ref_obj = 0.0;
        const std::vector<double> ref = gga_reference(net, field, rays, targets, opt, &ref_obj).flatten();
        const std::int64_t V = field.vertex_count();
        for (int parts : {1, 2, 7}) {
            GgaState st(field, make_partition(V, (V + parts - 1) / parts));
            const GgaResult res = gga_gradients(net, field, rays, targets, st, opt);
            const double dev = relative_deviation(res.grads.flatten(), ref);
            const double obj_dev = std::abs(res.objective - ref_obj) / std::max(std::abs(ref_obj), 1e-300);
            for (double d : {dev, obj_dev}) {
                ++count;
                if (!(d <= kGgaRelTol)) ++tally.violations;
                tally.max_ratio = std::max(tally.max_ratio, d / kGgaRelTol);
            }
        }
    }
    TrialReport r;
    r.suite = "gga";
    r.trials = count;
    r.violations = tally.violations;
    r.max_ratio = tally.max_ratio;
    r.tolerance = kGgaRelTol;
    r.seed = seed;
    return r;
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"prop1", "prop2", "prop3", "lemma1", "lemma2", "grad", "gga"};
    return names;
}

inline TrialReport run_suite(const std::string& name, std::int64_t trials, std::uint64_t seed) {
    if (name == "prop1") return check_prop1(trials, seed);
    if (name == "prop2") return check_prop2(trials, seed);
    if (name == "prop3") return check_prop3(trials, seed);
    if (name == "lemma1") return check_lemma1(trials, seed);
    if (name == "lemma2") return check_lemma2(trials, seed);
    if (name == "grad") return check_gradients(seed);
    if (name == "gga") return check_gga(seed);
    throw Error("unknown verify suite '" + name + "'");
}

}  // namespace liprf::verify
