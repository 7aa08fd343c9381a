#include "support.hpp"

namespace liprf {
namespace {

LipschitzNet small_field_net(const VoxelField& f, std::uint64_t seed, double k = 1.2) {
    NetConfig nc;
    nc.in_dim = net_input_dim(f);
    nc.out_dim = f.coeffs_per_vertex();
    nc.layers = 3;
    nc.width = 16;
    return LipschitzNet::create(nc, k, seed);
}

// Single layer that copies the SH block and ignores the position.
LipschitzNet identity_net(const VoxelField& f) {
    const int n = f.coeffs_per_vertex();
    LipLayer l;
    l.W = Eigen::MatrixXd::Zero(n, n + 3);
    l.W.leftCols(n).setIdentity();
    l.K = 1.0 - 1e-12 / 4.0;
    l.u = Eigen::VectorXd::Ones(n).normalized();
    l.v = Eigen::VectorXd::Zero(n + 3);
    l.has_bias = true;
    l.bias = Eigen::VectorXd::Zero(n);
    LipschitzNet net({l}, Activation::Sine, 1e-12);
    net.refresh_spectral(50);
    return net;
}

std::vector<Ray> view_rays_only(const Camera& cam, const Bounds& b, int samples) {
    std::vector<Ray> rays;
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) rays.push_back(generate_ray(cam, u, v, b, samples));
    return rays;
}

Camera corner_camera(int w) {
    return test::simple_camera(w, w, 0.9 * w, look_at(Vec3(2.2, 1.7, 1.4), Vec3(0.1, 0, 0), Vec3::UnitZ()));
}

std::vector<Vec3> random_targets(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 r(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> t(n);
    for (auto& c : t) c = Vec3(u(r), u(r), u(r));
    return t;
}

TEST(Partition, CoversRange) {
    const IndexRanges p = make_partition(10, 4);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p.back(), (std::pair<std::int64_t, std::int64_t>(8, 10)));
    EXPECT_NO_THROW(check_partition(p, 10));
    EXPECT_THROW(check_partition(p, 11), Error);
    EXPECT_THROW(check_partition({{0, 4}, {5, 10}}, 10), Error);
    EXPECT_THROW(check_partition({{0, 6}, {4, 10}}, 10), Error);
    EXPECT_THROW(make_partition(10, 0), Error);
    const VoxelField f({3, 3, 3}, Bounds{});
    EXPECT_THROW(GgaState(f, make_partition(26, 5)), Error);
}

TEST(ReachedVertices, UnreachedVerticesDoNotAffectColors) {
    VoxelField f = test::random_field(10, 21, 6.0, 0.5);
    const Camera cam = corner_camera(12);
    const std::vector<Ray> rays = view_rays_only(cam, f.bounds(), 48);
    const std::vector<std::uint8_t> reached = reached_vertices(f, rays);
    const auto count = std::count(reached.begin(), reached.end(), 1);
    EXPECT_GT(count, 0);
    EXPECT_LT(count, f.vertex_count());
    std::vector<Vec3> before;
    for (const Ray& r : rays) before.push_back(render_color(r, f));
    const int n = f.coeffs_per_vertex();
    for (std::int64_t v = 0; v < f.vertex_count(); ++v)
        if (!reached[static_cast<std::size_t>(v)]) std::fill_n(f.sh_at(v), n, 1e3);
    for (std::size_t i = 0; i < rays.size(); ++i) EXPECT_EQ(render_color(rays[i], f), before[i]);
}

TEST(Gga, BatchCountDoesNotChangeGradients) {
    const VoxelField f = test::random_field(6, 22);
    const LipschitzNet net = small_field_net(f, 1);
    const std::vector<Ray> rays = view_rays_only(corner_camera(8), f.bounds(), 32);
    const std::vector<Vec3> targets = random_targets(rays.size(), 3);
    GgaOptions opt;
    opt.k_est = 1.5;
    GgaState one(f, make_partition(f.vertex_count(), f.vertex_count()));
    GgaState two(f, make_partition(f.vertex_count(), (f.vertex_count() + 1) / 2));
    GgaState many(f, make_partition(f.vertex_count(), 7));
    const GgaResult a = gga_gradients(net, f, rays, targets, one, opt);
    const GgaResult b = gga_gradients(net, f, rays, targets, two, opt);
    const GgaResult c = gga_gradients(net, f, rays, targets, many, opt);
    const auto ga = a.grads.flatten(), gb = b.grads.flatten(), gc = c.grads.flatten();
    for (std::size_t i = 0; i < ga.size(); ++i) {
        EXPECT_NEAR(ga[i], gb[i], 1e-10);
        EXPECT_NEAR(ga[i], gc[i], 1e-10);
    }
    EXPECT_NEAR(a.objective, b.objective, 1e-12);
}

TEST(Gga, ObjectiveDefinition) {
    const VoxelField f = test::random_field(5, 23);
    const LipschitzNet net = small_field_net(f, 2);
    const std::vector<Ray> rays = view_rays_only(corner_camera(6), f.bounds(), 24);
    const std::vector<Vec3> targets = random_targets(rays.size(), 4);
    GgaOptions opt;
    opt.lambda = 0.3;
    opt.k_est = 2.0;
    GgaState st(f, make_partition(f.vertex_count(), 50));
    const GgaResult r = gga_gradients(net, f, rays, targets, st, opt);
    const VoxelField baked = bake_field(f, net);
    double sse = 0.0;
    for (std::size_t i = 0; i < rays.size(); ++i) sse += (render_color(rays[i], baked) - targets[i]).squaredNorm();
    EXPECT_NEAR(r.rec_sse, sse, 1e-9 * std::max(1.0, sse));
    EXPECT_NEAR(r.lip, net.lip_reg_loss(2.0), 1e-14);
    EXPECT_NEAR(r.objective, sse / static_cast<double>(f.vertex_count()) + 0.3 * r.lip, 1e-9);
}

TEST(Gga, EmptyFieldLeavesOnlyRegularizerGradient) {
    VoxelField f = test::random_field(5, 24);
    std::fill(f.density().begin(), f.density().end(), 0.0);
    const LipschitzNet net = small_field_net(f, 3, 1.7);
    const std::vector<Ray> rays = view_rays_only(corner_camera(6), f.bounds(), 24);
    const std::vector<Vec3> targets = random_targets(rays.size(), 5);
    GgaOptions opt;
    opt.k_est = 1.0;
    GgaState st(f, make_partition(f.vertex_count(), 64));
    const GgaResult r = gga_gradients(net, f, rays, targets, st, opt);
    NetGradients expect = net.zero_gradients();
    net.add_lip_reg_grad(1.0, opt.lambda, expect);
    const auto g = r.grads.flatten(), e = expect.flatten();
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], e[i]);

    opt.stylize_background = true;
    const GgaResult bg = gga_gradients(net, f, rays, targets, st, opt);
    double dw = 0.0;
    for (const auto& w : bg.grads.dW) dw += w.squaredNorm();
    EXPECT_GT(dw, 0.0);
}

TEST(Gga, StepLowersObjective) {
    const VoxelField f = test::random_field(5, 25);
    LipschitzNet net = small_field_net(f, 4);
    const std::vector<Ray> rays = view_rays_only(corner_camera(6), f.bounds(), 24);
    const std::vector<Vec3> targets = random_targets(rays.size(), 6);
    GgaOptions opt;
    opt.k_est = 1.0;
    GgaState st(f, make_partition(f.vertex_count(), 64));
    Adam adam(net.parameter_count());
    const double first = gga_step(net, f, rays, targets, st, opt, adam, 1e-2).objective;
    double last = first;
    for (int i = 0; i < 60; ++i) last = gga_step(net, f, rays, targets, st, opt, adam, 1e-2).objective;
    EXPECT_LT(last, first);
}

TEST(Bake, IdentityNetReproducesField) {
    const VoxelField f = test::random_field(6, 26);
    const VoxelField baked = bake_field(f, identity_net(f), 37);
    ASSERT_EQ(baked.sh().size(), f.sh().size());
    for (std::size_t i = 0; i < f.sh().size(); ++i) EXPECT_NEAR(baked.sh()[i], f.sh()[i], 1e-12);
    EXPECT_EQ(baked.density(), f.density());
    EXPECT_THROW(bake_field(VoxelField({3, 3, 3}, Bounds{}, 1), identity_net(f)), Error);
}

TEST(Bake, MatchesOnTheFlyEvaluation) {
    const VoxelField f = test::random_field(7, 27);
    const LipschitzNet net = small_field_net(f, 5, 1.4);
    const VoxelField baked = bake_field(f, net, 100);
    const int in = net_input_dim(f), n = f.coeffs_per_vertex();
    auto on_the_fly = [&](std::int64_t v) {
        thread_local std::vector<double> out;
        Eigen::VectorXd x(in);
        fill_input(f, v, x.data());
        const Eigen::VectorXd y = net.forward(x);
        out.assign(y.data(), y.data() + n);
        return static_cast<const double*>(out.data());
    };
    const Camera cam = corner_camera(10);
    const Vec3 bg(0.3, 0.5, 0.7);
    for (const Ray& r : view_rays_only(cam, f.bounds(), 32))
        EXPECT_LT((render_color_with(r, f, on_the_fly, bg) - render_color(r, baked, bg)).norm(), 1e-6);
}

TEST(Interpolate, EndpointsAndMidpoint) {
    const VoxelField a = test::random_field(4, 28);
    VoxelField b = a;
    for (double& c : b.sh()) c = 2.0 * c + 0.1;
    EXPECT_EQ(interpolate_fields(a, b, 0.0).sh(), a.sh());
    EXPECT_EQ(interpolate_fields(a, b, 1.0).sh(), b.sh());
    const VoxelField m = interpolate_fields(a, b, 0.5);
    for (std::size_t i = 0; i < a.sh().size(); ++i) EXPECT_NEAR(m.sh()[i], 0.5 * (a.sh()[i] + b.sh()[i]), 1e-15);
    EXPECT_EQ(m.density(), a.density());
    EXPECT_THROW(interpolate_fields(a, b, 1.5), Error);
    EXPECT_THROW(interpolate_fields(a, b, std::nan("")), Error);
    EXPECT_THROW(interpolate_fields(a, test::random_field(5, 1), 0.5), Error);
}

TEST(Interpolate, RenderIsAffineInAlpha) {
    const VoxelField a = test::random_field(5, 29);
    const VoxelField b = test::random_field(5, 30);
    VoxelField b_geom = a;
    b_geom.sh() = b.sh();
    const Camera cam = corner_camera(6);
    for (const Ray& r : view_rays_only(cam, a.bounds(), 32)) {
        const Vec3 ca = render_color(r, a), cb = render_color(r, b_geom);
        const Vec3 cm = render_color(r, interpolate_fields(a, b_geom, 0.25));
        EXPECT_LT((cm - (0.75 * ca + 0.25 * cb)).norm(), 1e-12);
    }
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.grid = 12;
    c.samples = 48;
    c.layers = 3;
    c.width = 16;
    c.epochs = 15;
    c.recon_epochs = 40;
    return c;
}

TEST(Reconstruction, ZeroEpochsKeepsInitialField) {
    const SceneDataset ds = fixtures::to_dataset(fixtures::generate(fixtures::preset("slab")));
    TrainConfig c = tiny_config();
    c.recon_epochs = 0;
    const VoxelField f = train_reconstruction(ds, c);
    for (double d : f.density()) EXPECT_EQ(d, c.recon_init_density);
    for (double s : f.sh()) EXPECT_EQ(s, 0.0);
    EXPECT_THROW(train_reconstruction(SceneDataset{}, c), Error);
}

TEST(Reconstruction, SlabReachesFortyDecibels) {
    const SceneDataset ds = fixtures::to_dataset(fixtures::generate(fixtures::preset("slab")));
    TrainConfig c;
    c.grid = 16;
    c.samples = 64;
    c.recon_epochs = 100;
    c.rays_per_step = 256;
    std::vector<ReconEpoch> history;
    const VoxelField f = train_reconstruction(ds, c, &history);
    ASSERT_EQ(history.size(), 100u);
    EXPECT_LT(history.back().mse, history.front().mse);
    EXPECT_GE(train_psnr(f, ds, c.samples), 40.0);
    for (double d : f.density()) EXPECT_GE(d, 0.0);
}

TEST(Reconstruction, DeterministicForSeed) {
    const SceneDataset ds = fixtures::to_dataset(fixtures::generate(fixtures::preset("slab")));
    TrainConfig c = tiny_config();
    c.recon_epochs = 3;
    EXPECT_EQ(train_reconstruction(ds, c).sh(), train_reconstruction(ds, c).sh());
}

struct TinyStage2 {
    SceneDataset ds;
    VoxelField field;
};

TinyStage2 tiny_stage2() {
    TinyStage2 t;
    t.ds = fixtures::to_dataset(fixtures::generate(fixtures::preset("slab")));
    t.field = train_reconstruction(t.ds, tiny_config());
    std::vector<Image> styled;
    for (const auto& v : t.ds.views) {
        Image img = v.image;
        for (std::size_t i = 0; i < img.data.size(); i += 3) std::swap(img.data[i], img.data[i + 2]);
        styled.push_back(img);
    }
    t.ds.stylized_views = styled;
    return t;
}

TEST(Stylization, LossDecreasesAndFieldStaysFrozen) {
    const TinyStage2 t = tiny_stage2();
    const VoxelField copy = t.field;
    LiprfSummary sum;
    const LipschitzNet net = train_liprf(t.field, t.ds, tiny_config(), &sum);
    EXPECT_LT(sum.final_objective, sum.initial_objective);
    EXPECT_EQ(sum.epochs.size(), 15u);
    EXPECT_NEAR(sum.final_lipschitz, net.lipschitz_constant(), 1e-12);
    EXPECT_EQ(t.field.sh(), copy.sh());
    EXPECT_EQ(t.field.density(), copy.density());
    const VoxelField baked = bake_field(t.field, net);
    EXPECT_EQ(baked.density(), t.field.density());
}

TEST(Stylization, ZeroEpochsReturnsInitialNetwork) {
    const TinyStage2 t = tiny_stage2();
    TrainConfig c = tiny_config();
    c.epochs = 0;
    LiprfSummary sum;
    const LipschitzNet net = train_liprf(t.field, t.ds, c, &sum);
    const double k = std::pow(sum.k_mkl, 1.0 / c.layers);
    for (const auto& l : net.layers()) EXPECT_DOUBLE_EQ(l.K, k);
    EXPECT_TRUE(sum.epochs.empty());
}

TEST(Stylization, OverrideChangesOnlyTheTarget) {
    const TinyStage2 t = tiny_stage2();
    TrainConfig c = tiny_config();
    c.epochs = 0;
    c.k_est_override = 0.0;
    LiprfSummary sum;
    const LipschitzNet net = train_liprf(t.field, t.ds, c, &sum);
    EXPECT_EQ(sum.k_target, 0.0);
    EXPECT_GT(sum.k_mkl, 0.5);
    EXPECT_DOUBLE_EQ(net.layers()[0].K, std::pow(sum.k_mkl, 1.0 / c.layers));
}

TEST(Stylization, RequiresStylizedViews) {
    const SceneDataset ds = fixtures::to_dataset(fixtures::generate(fixtures::preset("slab")));
    const VoxelField f({4, 4, 4}, ds.bounds);
    EXPECT_THROW(train_liprf(f, ds, tiny_config()), Error);
}

}  // namespace
}  // namespace liprf
