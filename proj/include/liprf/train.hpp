#pragma once

// Stage 1: photometric reconstruction of the voxel field.
// Stage 2: Lipschitz transformation of the appearance with gradual gradient
// aggregation (GGA), baking and style interpolation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "liprf/camera.hpp"
#include "liprf/common.hpp"
#include "liprf/config.hpp"
#include "liprf/field.hpp"
#include "liprf/image.hpp"
#include "liprf/lipnet.hpp"
#include "liprf/optim.hpp"
#include "liprf/pst.hpp"
#include "liprf/render.hpp"
#include "liprf/scene_io.hpp"

namespace liprf {

// ---------------------------------------------------------------------------
// Shared plumbing

/// Rays and target colors of a set of views, in view-major, row-major pixel order.
struct RaySet {
    std::vector<Ray> rays;
    std::vector<Vec3> colors;
};

inline RaySet view_rays(const Camera& cam, const Image& target, const Bounds& bounds, int samples) {
    if (target.width != cam.width || target.height != cam.height) throw Error("view_rays: image size mismatch");
    RaySet s;
    s.rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            s.rays.push_back(generate_ray(cam, u, v, bounds, samples));
            s.colors.push_back(target.pixel(u, v));
        }
    return s;
}

/// Per-sample adjoint of one ray, as consumed by scatter_gradients().
struct GradRecord {
    CellLocation loc;
    double g_sigma = 0.0;
    Vec3 g_color = Vec3::Zero();
};

/// Scatters per-ray records into per-vertex gradient buffers.
///
/// Every vertex receives its contributions in global (ray, sample) order no
/// matter how many threads run: threads own disjoint z-slabs of the grid.
inline void scatter_gradients(const VoxelField& field, const std::vector<std::vector<GradRecord>>& records,
                              const std::vector<ShBasis>& bases, double* grad_sh, double* grad_density) {
    const int nz = field.resolution()[2];
    const std::int64_t slab = static_cast<std::int64_t>(field.resolution()[0]) * field.resolution()[1];
    const auto off = field.corner_offsets();
    const int l = field.sh_count();
    const int n = field.coeffs_per_vertex();
#pragma omp parallel
    {
        const int nt = thread_count(), tid = thread_id();
        const int z0 = static_cast<int>(static_cast<std::int64_t>(nz) * tid / nt);
        const int z1 = static_cast<int>(static_cast<std::int64_t>(nz) * (tid + 1) / nt);
        for (std::size_t r = 0; r < records.size(); ++r) {
            const ShBasis& basis = bases[r];
            for (const GradRecord& rec : records[r]) {
                const int zb = static_cast<int>(rec.loc.base / slab);
                if (zb + 1 < z0 || zb >= z1) continue;
                const auto w = trilinear_weights(rec.loc.fx, rec.loc.fy, rec.loc.fz);
                for (int k = 0; k < 8; ++k) {
                    const int z = zb + (k >= 4 ? 1 : 0);
                    if (z < z0 || z >= z1 || w[k] == 0.0) continue;
                    const std::int64_t v = rec.loc.base + off[k];
                    if (grad_density != nullptr) grad_density[v] += w[k] * rec.g_sigma;
                    if (grad_sh == nullptr) continue;
                    double* g = grad_sh + v * n;
                    for (int ch = 0; ch < 3; ++ch) {
                        const double gc = w[k] * rec.g_color[ch];
                        if (gc == 0.0) continue;
                        for (int q = 0; q < l; ++q) g[ch * l + q] += gc * basis[static_cast<std::size_t>(q)];
                    }
                }
            }
        }
    }
}

inline double mse_to_psnr(double mse) { return mse <= 0.0 ? 99.0 : std::min(99.0, -10.0 * std::log10(mse)); }

// ---------------------------------------------------------------------------
// Stage 1

struct ReconEpoch {
    int epoch = 0;
    double mse = 0.0;   // mean over rays and channels, before each step's update
    double psnr = 0.0;
};

/// Photometric reconstruction: minimizes sum ||C(r) - C_gt(r)||² over shuffled
/// ray batches with Adam on per-vertex density and SH; densities are projected
/// onto [0, inf) after every step.
inline VoxelField train_reconstruction(const SceneDataset& dataset, const TrainConfig& cfg,
                                       std::vector<ReconEpoch>* history = nullptr) {
    if (dataset.views.empty()) throw Error("train_reconstruction: dataset has no views");
    cfg.validate();
    VoxelField field({cfg.grid, cfg.grid, cfg.grid}, dataset.bounds, cfg.sh_degree);
    std::fill(field.density().begin(), field.density().end(), cfg.recon_init_density);

    RaySet all;
    for (const auto& v : dataset.views) {
        RaySet s = view_rays(v.camera, v.image, dataset.bounds, cfg.samples);
        all.rays.insert(all.rays.end(), s.rays.begin(), s.rays.end());
        all.colors.insert(all.colors.end(), s.colors.begin(), s.colors.end());
    }
    const auto n_rays = static_cast<std::int64_t>(all.rays.size());
    const std::int64_t batch = cfg.rays_per_step;
    const std::int64_t steps_per_epoch = (n_rays + batch - 1) / batch;
    const std::int64_t total = steps_per_epoch * cfg.recon_epochs;

    std::vector<ShBasis> all_bases(all.rays.size());
    for (std::size_t r = 0; r < all.rays.size(); ++r)
        if (all.rays[r].hits()) all_bases[r] = eval_sh_basis(all.rays[r].dir, field.degree());

    Adam adam_density(field.density().size(), cfg.adam);
    Adam adam_sh(field.sh().size(), cfg.adam);
    std::vector<double> grad_density(field.density().size());
    std::vector<double> grad_sh(field.sh().size());
    std::vector<std::int64_t> order(static_cast<std::size_t>(n_rays));
    for (std::int64_t i = 0; i < n_rays; ++i) order[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::vector<GradRecord>> records(static_cast<std::size_t>(batch));
    std::vector<ShBasis> bases(static_cast<std::size_t>(batch));
    std::vector<double> ray_loss(static_cast<std::size_t>(batch));
    const Vec3 bg = dataset.background;

    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.recon_epochs; ++epoch) {
        // Fisher-Yates with an explicit generator so the order is identical across standard libraries.
        for (std::int64_t i = n_rays - 1; i > 0; --i) {
            const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        double epoch_sse = 0.0;
        for (std::int64_t b0 = 0; b0 < n_rays; b0 += batch) {
            const std::int64_t nb = std::min(batch, n_rays - b0);
            records.resize(static_cast<std::size_t>(nb));
            bases.resize(static_cast<std::size_t>(nb));
            ray_loss.assign(static_cast<std::size_t>(nb), 0.0);
            const double scale = 1.0 / static_cast<double>(nb);
#pragma omp parallel
            {
                std::vector<MarchSample> samples;
                std::vector<Vec3> colors;
                std::vector<double> g_sigma;
                std::vector<Vec3> g_color;
                const auto src = field_sh_source(field);
#pragma omp for schedule(dynamic, 64)
                for (std::int64_t i = 0; i < nb; ++i) {
                    const std::int64_t r = order[static_cast<std::size_t>(b0 + i)];
                    const Ray& ray = all.rays[static_cast<std::size_t>(r)];
                    auto& rec = records[static_cast<std::size_t>(i)];
                    rec.clear();
                    bases[static_cast<std::size_t>(i)] = all_bases[static_cast<std::size_t>(r)];
                    const double w_bg = march_ray(ray, field, samples);
                    const ShBasis& basis = all_bases[static_cast<std::size_t>(r)];
                    colors.resize(samples.size());
                    Vec3 c = w_bg * bg;
                    for (std::size_t s = 0; s < samples.size(); ++s) {
                        colors[s] = sample_color(field, src, samples[s].loc, basis);
                        c += samples[s].weight * colors[s];
                    }
                    const Vec3 err = c - all.colors[static_cast<std::size_t>(r)];
                    ray_loss[static_cast<std::size_t>(i)] = err.squaredNorm();
                    if (samples.empty()) continue;
                    composite_adjoint(samples, colors, w_bg, bg, 2.0 * scale * err, g_sigma, g_color);
                    for (std::size_t s = 0; s < samples.size(); ++s) {
                        if (!samples[s].loc.inside) continue;
                        if (g_sigma[s] == 0.0 && samples[s].weight == 0.0) continue;
                        rec.push_back({samples[s].loc, g_sigma[s], g_color[s]});
                    }
                }
            }
            double sse = 0.0;
            for (double l : ray_loss) sse += l;
            if (!std::isfinite(sse)) {
                throw Error("train_reconstruction: loss diverged (non-finite) at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
            }
            epoch_sse += sse;
            std::fill(grad_density.begin(), grad_density.end(), 0.0);
            std::fill(grad_sh.begin(), grad_sh.end(), 0.0);
            scatter_gradients(field, records, bases, grad_sh.data(), grad_density.data());
            adam_density.step(field.density(), grad_density,
                              cosine_lr(step, total, cfg.recon_lr_density_start, cfg.recon_lr_density_end));
            adam_sh.step(field.sh(), grad_sh, cosine_lr(step, total, cfg.recon_lr_sh_start, cfg.recon_lr_sh_end));
            clamp_density(field);
            ++step;
        }
        const double mse = epoch_sse / (3.0 * static_cast<double>(n_rays));
        const ReconEpoch e{epoch, mse, mse_to_psnr(mse)};
        if (history != nullptr) history->push_back(e);
        if (epoch % 10 == 0 || epoch + 1 == cfg.recon_epochs) {
            log::info("recon epoch " + std::to_string(epoch) + " mse " + std::to_string(mse) + " psnr " +
                      std::to_string(e.psnr));
        }
    }
    return field;
}

/// PSNR of clamped renders against the dataset's own images.
inline double train_psnr(const VoxelField& field, const SceneDataset& dataset, int samples) {
    double sse = 0.0;
    std::size_t n = 0;
    for (const auto& v : dataset.views) {
        const RenderedView r = render_view(v.camera, field, {samples, dataset.background});
        for (std::size_t i = 0; i < r.image.data.size(); ++i) {
            const double d = r.image.data[i] - v.image.data[i];
            sse += d * d;
        }
        n += r.image.data.size();
    }
    return mse_to_psnr(sse / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Stage 2

using IndexRanges = std::vector<std::pair<std::int64_t, std::int64_t>>;

/// Consecutive [i, j) ranges of at most `batch` vertices covering [0, n).
inline IndexRanges make_partition(std::int64_t n, std::int64_t batch) {
    if (batch < 1) throw Error("make_partition: batch must be >= 1");
    IndexRanges idx;
    for (std::int64_t i = 0; i < n; i += batch) idx.emplace_back(i, std::min(n, i + batch));
    return idx;
}

inline void check_partition(const IndexRanges& idx, std::int64_t n) {
    std::int64_t next = 0;
    for (const auto& [i, j] : idx) {
        if (i != next || j <= i) throw Error("gga: idx is not a partition of the vertex range");
        next = j;
    }
    if (next != n) throw Error("gga: idx is not a partition of the vertex range");
}

/// Net input of a vertex: flattened SH coefficients followed by the normalized position.
inline int net_input_dim(const VoxelField& f) { return f.coeffs_per_vertex() + 3; }

inline void fill_input(const VoxelField& field, std::int64_t v, double* col) {
    const int n = field.coeffs_per_vertex();
    std::copy_n(field.sh_at(v), n, col);
    const Vec3 p = field.normalized_position(v);
    col[n] = p.x();
    col[n + 1] = p.y();
    col[n + 2] = p.z();
}

/// Background as a pseudo-vertex at the grid center whose DC coefficients reproduce `bg`.
inline Eigen::VectorXd background_input(const VoxelField& field, const Vec3& bg) {
    const int l = field.sh_count();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(net_input_dim(field));
    for (int ch = 0; ch < 3; ++ch) x[ch * l] = (bg[ch] - field.v_offset()[ch]) / sh_const::c0;
    x.tail(3).setConstant(0.5);
    return x;
}

inline Vec3 background_from_output(const VoxelField& field, const Eigen::VectorXd& out) {
    const int l = field.sh_count();
    return Vec3(out[0], out[l], out[2 * l]) * sh_const::c0 + field.v_offset();
}

/// Background color under the net (DC part of the transformed pseudo-vertex).
inline Vec3 transform_background(const LipschitzNet& net, const VoxelField& field, const Vec3& bg) {
    return background_from_output(field, net.forward(background_input(field, bg)).col(0));
}

/// Vertices touched by a nonzero-weight sample of `rays`; no other vertex
/// affects their rendered colors.
inline std::vector<std::uint8_t> reached_vertices(const VoxelField& field, std::span<const Ray> rays) {
    const auto nr = static_cast<std::int64_t>(rays.size());
    std::vector<std::vector<std::int64_t>> cells(rays.size());
#pragma omp parallel
    {
        std::vector<MarchSample> samples;
#pragma omp for schedule(dynamic, 64)
        for (std::int64_t r = 0; r < nr; ++r) {
            const auto ri = static_cast<std::size_t>(r);
            (void)march_ray(rays[ri], field, samples);
            for (const auto& s : samples)
                if (s.weight != 0.0 && s.loc.inside && (cells[ri].empty() || cells[ri].back() != s.loc.base))
                    cells[ri].push_back(s.loc.base);
        }
    }
    const auto off = field.corner_offsets();
    std::vector<std::uint8_t> reached(static_cast<std::size_t>(field.vertex_count()), 0);
    for (const auto& list : cells)
        for (const std::int64_t base : list)
            for (int c = 0; c < 8; ++c) reached[static_cast<std::size_t>(base + off[c])] = 1;
    return reached;
}

struct GgaOptions {
    double lambda = 2e-4;
    double k_est = 1.0;  // regularization target
    Vec3 background = Vec3::Ones();
    bool stylize_background = false;
};

/// GGA buffers: detached sh_t for every vertex, its gradient and the batch ranges.
/// Each step refreshes sh_t only on the vertices its rays reach.
class GgaState {
public:
    GgaState(const VoxelField& field, IndexRanges idx) : idx_(std::move(idx)) {
        check_partition(idx_, field.vertex_count());
        sh_t_.assign(field.sh().size(), 0.0);
        sh_grad_.assign(field.sh().size(), 0.0);
    }

    [[nodiscard]] const IndexRanges& idx() const { return idx_; }
    [[nodiscard]] const std::vector<double>& sh_t() const { return sh_t_; }
    [[nodiscard]] const std::vector<double>& sh_grad() const { return sh_grad_; }

private:
    friend struct GgaKernel;
    IndexRanges idx_;
    std::vector<double> sh_t_;
    std::vector<double> sh_grad_;
};

struct GgaResult {
    NetGradients grads;
    double objective = 0.0;  // rec_sse / B + lambda * lip
    double rec_sse = 0.0;
    double lip = 0.0;
};

struct GgaKernel {
    static Eigen::MatrixXd batch_input(const VoxelField& field, const std::vector<std::int64_t>& cols) {
        Eigen::MatrixXd x(net_input_dim(field), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) fill_input(field, cols[c], x.col(static_cast<Eigen::Index>(c)).data());
        return x;
    }

    static GgaResult run(const LipschitzNet& net, const VoxelField& field, std::span<const Ray> rays,
                         std::span<const Vec3> targets, GgaState& st, const GgaOptions& opt) {
        if (rays.size() != targets.size()) throw Error("gga: ray and target counts differ");
        if (net.in_dim() != net_input_dim(field) || net.out_dim() != field.coeffs_per_vertex()) {
            throw Error("gga: network shape does not match the field");
        }
        if (st.sh_t_.size() != field.sh().size()) throw Error("gga: state does not match the field");
        const int n = field.coeffs_per_vertex();
        const auto B = static_cast<double>(field.vertex_count());
        const std::vector<std::uint8_t> reached = reached_vertices(field, rays);
        std::vector<std::vector<std::int64_t>> batches;
        for (const auto& [i, j] : st.idx_) {
            auto& cols = batches.emplace_back();
            for (std::int64_t v = i; v < j; ++v)
                if (reached[static_cast<std::size_t>(v)]) cols.push_back(v);
        }

        // Phase 0: gradient-free forward over batches.
        for (const auto& cols : batches) {
            if (cols.empty()) continue;
            const Eigen::MatrixXd y = net.forward(batch_input(field, cols));
            for (std::size_t c = 0; c < cols.size(); ++c)
                std::copy_n(y.col(static_cast<Eigen::Index>(c)).data(), n, st.sh_t_.data() + cols[c] * n);
        }
        Eigen::VectorXd bg_in;
        Vec3 bg = opt.background;
        if (opt.stylize_background) {
            bg_in = background_input(field, opt.background);
            bg = background_from_output(field, net.forward(bg_in).col(0));
        }
        const double* sh_t = st.sh_t_.data();
        const auto src = [sh_t, n](std::int64_t v) { return sh_t + v * n; };
        const auto nr = static_cast<std::int64_t>(rays.size());
        std::vector<Vec3> c_hat(rays.size());
#pragma omp parallel for schedule(dynamic, 64)
        for (std::int64_t r = 0; r < nr; ++r)
            c_hat[static_cast<std::size_t>(r)] = render_color_with(rays[static_cast<std::size_t>(r)], field, src, bg);

        // Phase 1: d(sum of squared errors)/dC.
        GgaResult res;
        std::vector<Vec3> g_c(rays.size());
        for (std::size_t r = 0; r < rays.size(); ++r) {
            const Vec3 e = c_hat[r] - targets[r];
            res.rec_sse += e.squaredNorm();
            g_c[r] = 2.0 * e;
        }
        if (!std::isfinite(res.rec_sse)) throw Error("gga: reconstruction loss is not finite");

        // Phase 2: re-done render, propagated to sh_t.
        std::vector<std::vector<GradRecord>> records(rays.size());
        std::vector<ShBasis> bases(rays.size());
        std::vector<double> w_bg(rays.size(), 1.0);
#pragma omp parallel
        {
            std::vector<MarchSample> samples;
#pragma omp for schedule(dynamic, 64)
            for (std::int64_t r = 0; r < nr; ++r) {
                const auto ri = static_cast<std::size_t>(r);
                const Ray& ray = rays[ri];
                w_bg[ri] = march_ray(ray, field, samples);
                records[ri].clear();
                if (!ray.hits()) continue;
                bases[ri] = eval_sh_basis(ray.dir, field.degree());
                for (const auto& s : samples)
                    if (s.weight != 0.0 && s.loc.inside) records[ri].push_back({s.loc, 0.0, s.weight * g_c[ri]});
            }
        }
        std::fill(st.sh_grad_.begin(), st.sh_grad_.end(), 0.0);
        scatter_gradients(field, records, bases, st.sh_grad_.data(), nullptr);
        Vec3 g_bg = Vec3::Zero();
        for (std::size_t r = 0; r < rays.size(); ++r) g_bg += w_bg[r] * g_c[r];

        // Phase 3: per batch, re-forward and backpropagate sh_t.grad / B.
        res.grads = net.zero_gradients();
        for (const auto& cols : batches) {
            if (cols.empty()) continue;
            ForwardCache cache;
            (void)net.forward(batch_input(field, cols), &cache);
            Eigen::MatrixXd g(n, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t c = 0; c < cols.size(); ++c)
                for (int q = 0; q < n; ++q) g(q, static_cast<Eigen::Index>(c)) = st.sh_grad_[static_cast<std::size_t>(cols[c] * n + q)] / B;
            res.grads += net.backward(cache, g);
        }
        if (opt.stylize_background) {
            ForwardCache cache;
            (void)net.forward(bg_in, &cache);
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, 1);
            const int l = field.sh_count();
            for (int ch = 0; ch < 3; ++ch) g(ch * l, 0) = sh_const::c0 * g_bg[ch] / B;
            res.grads += net.backward(cache, g);
        }
        res.lip = net.lip_reg_loss(opt.k_est);
        net.add_lip_reg_grad(opt.k_est, opt.lambda, res.grads);
        res.objective = res.rec_sse / B + opt.lambda * res.lip;
        return res;
    }
};

/// Phases 0-3 of a GGA step without the optimizer update: parameter gradients of
/// sum_r ||C'(r) - target(r)||² / B + lambda * L_Lip, with B the vertex count.
inline GgaResult gga_gradients(const LipschitzNet& net, const VoxelField& field, std::span<const Ray> rays,
                               std::span<const Vec3> targets, GgaState& state, const GgaOptions& opt) {
    return GgaKernel::run(net, field, rays, targets, state, opt);
}

/// One GGA iteration: power-iteration refresh, gradients, one Adam step.
inline GgaResult gga_step(LipschitzNet& net, const VoxelField& field, std::span<const Ray> rays,
                          std::span<const Vec3> targets, GgaState& state, const GgaOptions& opt, Adam& adam,
                          double lr) {
    net.refresh_spectral(1);
    GgaResult res = gga_gradients(net, field, rays, targets, state, opt);
    const std::vector<double> g = res.grads.flatten();
    std::vector<double> p = net.parameters();
    adam.step(p, g, lr);
    net.set_parameters(p);
    return res;
}

struct LiprfEpoch {
    int epoch = 0;
    double objective = 0.0;  // mean over views
    double rec_mse = 0.0;    // per channel
    double lipschitz = 0.0;
};

struct LiprfSummary {
    double k_mkl = 0.0;     // spectral norm of the MKL map between source and stylized views
    double k_target = 0.0;  // regularization target actually used
    double initial_objective = 0.0;
    double final_objective = 0.0;
    double final_lipschitz = 0.0;
    std::vector<LiprfEpoch> epochs;
};

inline NetConfig net_config(const TrainConfig& cfg, const VoxelField& field) {
    NetConfig nc;
    nc.in_dim = net_input_dim(field);
    nc.out_dim = field.coeffs_per_vertex();
    nc.layers = cfg.layers;
    nc.width = cfg.width;
    nc.activation = parse_activation(cfg.activation);
    nc.b_sq = cfg.b_sq;
    nc.hidden_bias = cfg.hidden_bias;
    return nc;
}

/// Stage 2: trains the Lipschitz MLP against the stylized views with the
/// geometry and source appearance frozen. Layer constants start at
/// K_mkl^(1/l); `cfg.k_est_override` replaces only the regularization target.
inline LipschitzNet train_liprf(const VoxelField& field, const SceneDataset& dataset, const TrainConfig& cfg,
                                LiprfSummary* summary = nullptr) {
    cfg.validate();
    if (!dataset.stylized_views || dataset.stylized_views->size() != dataset.views.size()) {
        throw Error("train_liprf: missing stylized views");
    }
    if (dataset.views.empty()) throw Error("train_liprf: dataset has no views");
    const auto& styl = *dataset.stylized_views;
    const auto sources = dataset.images();
    const double k_mkl = pst::kest_between(sources, styl);
    const double k_target = cfg.k_est_override.value_or(k_mkl);
    log::info("K_est (MKL) " + std::to_string(k_mkl) + ", regularization target " + std::to_string(k_target));

    const NetConfig nc = net_config(cfg, field);
    LipschitzNet net = LipschitzNet::create(nc, std::pow(k_mkl, 1.0 / nc.layers), cfg.seed);
    GgaState state(field, make_partition(field.vertex_count(), cfg.gga_batch));
    std::vector<RaySet> views;
    for (std::size_t i = 0; i < dataset.views.size(); ++i)
        views.push_back(view_rays(dataset.views[i].camera, styl[i], field.bounds(), cfg.samples));

    GgaOptions opt{cfg.lambda, k_target, dataset.background, cfg.stylize_background};
    Adam adam(net.parameter_count(), cfg.adam);
    const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * static_cast<std::int64_t>(views.size());
    std::int64_t step = 0;
    LiprfSummary sum;
    sum.k_mkl = k_mkl;
    sum.k_target = k_target;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        LiprfEpoch e{epoch, 0.0, 0.0, 0.0};
        std::size_t pixels = 0;
        for (const auto& v : views) {
            const GgaResult r = gga_step(net, field, v.rays, v.colors, state, opt, adam,
                                         cosine_lr(step, total, cfg.lr_start, cfg.lr_end));
            if (!std::isfinite(r.objective)) throw Error("train_liprf: loss diverged at epoch " + std::to_string(epoch));
            if (step == 0) sum.initial_objective = r.objective;
            e.objective += r.objective;
            e.rec_mse += r.rec_sse;
            pixels += v.rays.size();
            ++step;
        }
        e.objective /= static_cast<double>(views.size());
        e.rec_mse /= 3.0 * static_cast<double>(pixels);
        e.lipschitz = net.lipschitz_constant();
        sum.epochs.push_back(e);
        if (epoch % 10 == 0 || epoch + 1 == cfg.epochs) {
            log::info("liprf epoch " + std::to_string(epoch) + " loss " + std::to_string(e.objective) + " rec mse " +
                      std::to_string(e.rec_mse) + " K " + std::to_string(e.lipschitz));
        }
    }
    sum.final_objective = sum.epochs.empty() ? 0.0 : sum.epochs.back().objective;
    sum.final_lipschitz = net.lipschitz_constant();
    log::info("final lipschitz_constant " + std::to_string(sum.final_lipschitz) + " (K_est " + std::to_string(k_mkl) +
              ")");
    if (summary != nullptr) *summary = std::move(sum);
    return net;
}

/// F'_sh = f(F_sh, position) at every vertex; geometry is copied.
inline VoxelField bake_field(const VoxelField& field, const LipschitzNet& net, std::int64_t batch = 65536) {
    if (net.in_dim() != net_input_dim(field) || net.out_dim() != field.coeffs_per_vertex()) {
        throw Error("bake_field: network shape does not match the field");
    }
    VoxelField out = field;
    const int n = field.coeffs_per_vertex();
    for (const auto& [i, j] : make_partition(field.vertex_count(), batch)) {
        Eigen::MatrixXd x(net_input_dim(field), j - i);
        for (std::int64_t v = i; v < j; ++v) fill_input(field, v, x.col(v - i).data());
        const Eigen::MatrixXd y = net.forward(x);
        for (std::int64_t v = i; v < j; ++v) std::copy_n(y.col(v - i).data(), n, out.sh_at(v));
    }
    return out;
}

/// F^alpha_sh = alpha F'_sh + (1 - alpha) F_sh; density and offset from F.
inline VoxelField interpolate_fields(const VoxelField& source, const VoxelField& stylized, double alpha) {
    if (source.resolution() != stylized.resolution() || !(source.bounds() == stylized.bounds()) ||
        source.degree() != stylized.degree()) {
        throw Error("interpolate_fields: field shapes differ");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("interpolate_fields: alpha must lie in [0, 1]");
    VoxelField out = source;
    if (alpha == 0.0) return out;
    if (alpha == 1.0) {
        out.sh() = stylized.sh();
        return out;
    }
    auto& sh = out.sh();
    const auto& a = source.sh();
    const auto& b = stylized.sh();
    for (std::size_t i = 0; i < sh.size(); ++i) sh[i] = alpha * b[i] + (1.0 - alpha) * a[i];
    return out;
}

}  // namespace liprf
