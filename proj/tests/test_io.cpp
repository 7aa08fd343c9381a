#include <fstream>

#include "support.hpp"

namespace liprf {
namespace {

Image gradient_image(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.set_pixel(x, y, Vec3(x / double(w), y / double(h), (x * 7 + y * 3) % 256 / 255.0));
    return img;
}

Image quantized(Image img) {
    for (double& v : img.data) v = quantize8(v) / 255.0;
    return img;
}

TEST(ImageIo, QuantizeRoundsHalfUp) {
    EXPECT_EQ(quantize8(0.5), 128);
    EXPECT_EQ(quantize8(0.0), 0);
    EXPECT_EQ(quantize8(1.0), 255);
    EXPECT_EQ(quantize8(-0.2), 0);
    EXPECT_EQ(quantize8(1.7), 255);
    EXPECT_EQ(quantize8(127.5 / 255.0), 128);
}

TEST(ImageIo, PngAndPpmRoundTrip) {
    test::TempDir dir("img");
    const Image img = gradient_image(13, 7);
    for (const char* name : {"a.png", "a.ppm", "A.PNG"}) {
        write_image(img, dir / name);
        const Image back = read_image(dir / name);
        ASSERT_TRUE(back.same_shape(img));
        EXPECT_EQ(back, quantized(img)) << name;
    }
}

TEST(ImageIo, Errors) {
    test::TempDir dir("imgerr");
    EXPECT_THROW(read_image(dir / "missing.png"), Error);
    EXPECT_THROW(write_image(Image(2, 2), dir / "x.bmp"), Error);
    std::ofstream(dir / "bad.png") << "not a png";
    EXPECT_THROW(read_image(dir / "bad.png"), Error);
}

TEST(ImageIo, PfmRoundTripKeepsInfinity) {
    test::TempDir dir("pfm");
    ScalarMap m(4, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) m.at(x, y) = 0.25 * x + y;
    m.at(1, 2) = std::numeric_limits<double>::infinity();
    write_pfm(m, dir / "d.pfm");
    const ScalarMap back = read_pfm(dir / "d.pfm");
    ASSERT_EQ(back.width, 4);
    ASSERT_EQ(back.height, 3);
    for (std::size_t i = 0; i < m.data.size(); ++i) EXPECT_EQ(back.data[i], m.data[i]);
}

TEST(SceneIo, GeneratedSceneLoadsBack) {
    test::TempDir dir("scene");
    const auto scene = fixtures::preset("slab");
    const SceneManifest m = fixtures::generate_scene(scene, dir.path());
    const SceneDataset ds = load_scene(dir.path());
    ASSERT_EQ(ds.views.size(), 2u);
    const auto g = fixtures::generate(scene);
    const SceneDataset mem = fixtures::to_dataset(g);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(ds.views[i].image, mem.views[i].image);
        EXPECT_EQ(ds.views[i].camera.pose, m.poses[i]);
        EXPECT_EQ(ds.views[i].camera.focal, 40.0);
    }
    EXPECT_FALSE(ds.stylized_views.has_value());
}

TEST(SceneIo, CenterPixelRayFollowsViewingAxis) {
    test::TempDir dir("center");
    fixtures::generate_scene(fixtures::preset("occluder"), dir.path());
    const SceneDataset ds = load_scene(dir.path());
    for (const auto& v : ds.views) {
        const Camera& c = v.camera;
        const Vec3 d = c.direction_through(c.cx, c.cy).normalized();
        EXPECT_LT((d - c.viewing_axis()).norm(), 1e-12);
    }
}

TEST(SceneIo, ManifestRoundTrip) {
    SceneManifest m = fixtures::generate(fixtures::preset("occluder")).manifest;
    m.stylized_dir = "styled";
    m.background = Vec3(0.1, 0.2, 0.3);
    const SceneManifest back = parse_manifest(manifest_to_json(m));
    EXPECT_EQ(back.files, m.files);
    EXPECT_EQ(back.stylized_dir, m.stylized_dir);
    EXPECT_EQ(back.background, m.background);
    for (std::size_t i = 0; i < m.poses.size(); ++i) EXPECT_EQ(back.poses[i], m.poses[i]);
}

TEST(SceneIo, MissingImageNamesFile) {
    test::TempDir dir("missing");
    fixtures::generate_scene(fixtures::preset("slab"), dir.path());
    std::filesystem::remove(dir / "images/001.png");
    try {
        (void)load_scene(dir.path());
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("001.png"), std::string::npos);
    }
}

TEST(SceneIo, ManifestErrors) {
    const nlohmann::json good = manifest_to_json(fixtures::generate(fixtures::preset("slab")).manifest);
    auto expect_error = [](const nlohmann::json& j, const std::string& needle) {
        try {
            (void)parse_manifest(j);
            ADD_FAILURE() << "expected an error containing " << needle;
        } catch (const Error& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    nlohmann::json j = good;
    j.erase("focal");
    expect_error(j, "focal");
    j = good;
    j["bounds_min"] = {0, 0};
    expect_error(j, "bounds_min");
    j = good;
    j["frames"][0]["transform"][0] = 2.0;
    expect_error(j, "non-orthonormal");
    j = good;
    j["frames"][1]["transform"] = {1, 2, 3};
    expect_error(j, "transform");
    j = good;
    j["width"] = "wide";
    expect_error(j, "width");

    test::TempDir dir("manifest");
    EXPECT_THROW((void)read_manifest(dir / "scene.json"), Error);
    std::ofstream(dir / "scene.json") << "{ broken";
    EXPECT_THROW((void)read_manifest(dir / "scene.json"), Error);
}

TEST(SceneIo, StylizedDirectoryIsLoadedAndChecked) {
    test::TempDir dir("styled");
    SceneManifest m = fixtures::generate_scene(fixtures::preset("slab"), dir.path());
    std::filesystem::create_directories(dir / "styled");
    const Image tint(m.width, m.height, 0.25);
    for (const auto& f : m.files) write_image(tint, dir / "styled" / std::filesystem::path(f).filename());
    m.stylized_dir = "styled";
    write_manifest(m, dir / "scene.json");
    const SceneDataset ds = load_scene(dir.path());
    ASSERT_TRUE(ds.stylized_views.has_value());
    EXPECT_EQ(ds.stylized_views->size(), 2u);
    EXPECT_EQ((*ds.stylized_views)[1], quantized(tint));
    write_image(Image(3, 3), dir / "styled/000.png");
    EXPECT_THROW((void)load_scene(dir.path()), Error);
}

Checkpoint sample_checkpoint(bool with_net) {
    Checkpoint c;
    c.stage = with_net ? Stage::Liprf : Stage::Recon;
    c.seed = 42;
    c.config = R"({"grid":4})";
    c.field = test::random_field(4, 5);
    if (with_net) {
        NetConfig nc;
        nc.layers = 2;
        nc.width = 8;
        c.net = LipschitzNet::create(nc, 1.1, 3);
    }
    return c;
}

TEST(Checkpoint, ByteExactRoundTrip) {
    test::TempDir dir("ckpt");
    for (bool net : {false, true}) {
        const Checkpoint c = sample_checkpoint(net);
        save_checkpoint(c, dir / "a.ckpt");
        const Checkpoint back = load_checkpoint(dir / "a.ckpt");
        EXPECT_TRUE(back == c);
        EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
    }
}

TEST(Checkpoint, LoadedNetworkRendersIdentically) {
    const Checkpoint c = sample_checkpoint(true);
    const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(c));
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(30, 9);
    EXPECT_EQ(back.net->forward(x), c.net->forward(x));
}

void expect_message(std::vector<char> bytes, const std::string& needle) {
    try {
        (void)deserialize_checkpoint(std::move(bytes));
        ADD_FAILURE() << "expected " << needle;
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, CorruptionIsReported) {
    const std::vector<char> good = serialize_checkpoint(sample_checkpoint(true));
    std::vector<char> b = good;
    b[0] = 'X';
    expect_message(b, "not a checkpoint");
    b = good;
    b[4] = 9;
    expect_message(b, "version mismatch");
    for (std::size_t cut : {good.size() - 1, good.size() / 2, std::size_t{10}}) {
        b.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
        expect_message(b, "truncated");
    }
    b = good;
    b.push_back(0);
    expect_message(b, "trailing bytes");
    expect_message({}, "not a checkpoint");
}

TEST(Config, DefaultsAndOverrides) {
    const TrainConfig d;
    EXPECT_EQ(d.lambda, 2e-4);
    EXPECT_EQ(d.epochs, 300);
    EXPECT_EQ(d.lr_start, 1e-2);
    EXPECT_EQ(d.lr_end, 1e-4);
    EXPECT_EQ(d.layers, 6);
    EXPECT_EQ(d.width, 64);
    EXPECT_EQ(d.gga_batch, 65536);
    const TrainConfig c = config_from_json(nlohmann::json{{"lambda", 0.0}, {"k_est", 3.5}, {"activation", "relu"}});
    EXPECT_EQ(c.lambda, 0.0);
    EXPECT_EQ(c.k_est_override, 3.5);
    EXPECT_EQ(c.activation, "relu");
    EXPECT_EQ(c.epochs, 300);
}

TEST(Config, JsonRoundTrip) {
    TrainConfig c;
    c.grid = 17;
    c.seed = 99;
    c.k_est_override = 0.0;
    c.stylize_background = true;
    EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(config_from_json(nlohmann::json{{"lamda", 1.0}}), Error);
    EXPECT_THROW(config_from_json(nlohmann::json{{"epochs", "many"}}), Error);
    EXPECT_THROW(config_from_json(nlohmann::json{{"lr_end", 1.0}}), Error);
    EXPECT_THROW(config_from_json(nlohmann::json{{"activation", "tanh"}}), Error);
    EXPECT_THROW(config_from_json(nlohmann::json{{"grid", 1}}), Error);
    EXPECT_THROW(config_from_json(nlohmann::json::array()), Error);
}

TEST(CosineLr, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-2, 1e-4), 1e-2);
    EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 1e-2, 1e-4), 1e-4);
    EXPECT_NEAR(cosine_lr(50, 100, 1e-2, 1e-4), 0.5 * (1e-2 + 1e-4), 1e-15);
    EXPECT_DOUBLE_EQ(cosine_lr(0, 0, 0.3, 0.1), 0.3);
    EXPECT_THROW(cosine_lr(101, 100, 1.0, 0.1), Error);
}

TEST(CosineLr, MonotoneDecreasing) {
    double prev = cosine_lr(0, 1000, 1.0, 0.01);
    for (int s = 1; s <= 1000; ++s) {
        const double lr = cosine_lr(s, 1000, 1.0, 0.01);
        EXPECT_LE(lr, prev);
        prev = lr;
    }
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Adam opt(3);
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 1e-3};
    opt.step(p, g, 0.1);
    EXPECT_NEAR(p[0], 0.9, 1e-6);
    EXPECT_NEAR(p[1], -1.9, 1e-6);
    EXPECT_NEAR(p[2], 0.4, 1e-4);
    EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MatchesReferenceRecurrence) {
    const AdamParams hp{0.8, 0.95, 1e-6};
    Adam opt(2, hp);
    std::vector<double> p{0.3, -0.7};
    double m[2] = {0, 0}, v[2] = {0, 0}, q[2] = {0.3, -0.7};
    for (int t = 1; t <= 20; ++t) {
        const std::vector<double> g{std::sin(t * 0.7), 0.1 * t};
        opt.step(p, g, 0.05);
        for (int i = 0; i < 2; ++i) {
            m[i] = hp.beta1 * m[i] + (1 - hp.beta1) * g[static_cast<std::size_t>(i)];
            v[i] = hp.beta2 * v[i] + (1 - hp.beta2) * g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
            const double mh = m[i] / (1 - std::pow(hp.beta1, t));
            const double vh = v[i] / (1 - std::pow(hp.beta2, t));
            q[i] -= 0.05 * mh / (std::sqrt(vh) + hp.eps);
        }
    }
    EXPECT_NEAR(p[0], q[0], 1e-12);
    EXPECT_NEAR(p[1], q[1], 1e-12);
}

TEST(Adam, MinimizesQuadratic) {
    Adam opt(4);
    std::vector<double> p{3, -2, 5, 1};
    for (int s = 0; s < 2000; ++s) {
        std::vector<double> g(4);
        for (std::size_t i = 0; i < 4; ++i) g[i] = 2.0 * (p[i] - double(i));
        opt.step(p, g, cosine_lr(s, 2000, 0.1, 1e-4));
    }
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], double(i), 1e-3);
    EXPECT_THROW(opt.step(p, std::vector<double>(3), 0.1), Error);
}

TEST(Fixtures, RedBoxCenterPixelIsExact) {
    fixtures::ToyScene s;
    fixtures::Albedo red;
    red.base = Vec3(1, 0, 0);
    s.primitives.emplace_back(fixtures::Box{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5), red});
    s.width = s.height = 16;
    s.focal = 10.0;
    s.poses.push_back(look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY()));
    const auto g = fixtures::generate(s);
    EXPECT_EQ(g.views[0].image.pixel(8, 8), Vec3(1, 0, 0));
    EXPECT_EQ(g.views[0].image.pixel(0, 0), Vec3::Ones());
    EXPECT_NEAR(g.views[0].depth.at(8, 8), std::hypot(2.5, 0.5 / 10.0 * std::sqrt(2.0) * 2.5), 1e-3);
    EXPECT_TRUE(std::isinf(g.views[0].depth.at(0, 0)));
}

TEST(Fixtures, EmptySceneIsBackground) {
    fixtures::ToyScene s;
    s.width = s.height = 8;
    s.background = Vec3(0.2, 0.4, 0.6);
    s.ring.count = 3;
    const auto g = fixtures::generate(s);
    ASSERT_EQ(g.views.size(), 3u);
    for (const auto& v : g.views)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) EXPECT_EQ(v.image.pixel(x, y), s.background);
}

TEST(Fixtures, DeterministicAndSeeded) {
    const auto s = fixtures::preset("two_object");
    const auto a = fixtures::generate(s, 7), b = fixtures::generate(s, 7), c = fixtures::generate(s, 0);
    EXPECT_EQ(a.views[3].image, b.views[3].image);
    EXPECT_FALSE(a.manifest.poses[0] == c.manifest.poses[0]);
    EXPECT_EQ(c.manifest.poses.size(), 8u);
    for (const auto& p : c.manifest.poses) {
        Camera cam;
        cam.pose = p;
        EXPECT_LT(cam.orthonormality_error(), 1e-12);
        EXPECT_NEAR(cam.position().norm(), 3.0, 1e-12);
    }
}

TEST(Fixtures, DepthMatchesSphereIntersection) {
    const auto s = fixtures::preset("two_object");
    const Camera cam = fixtures::make_camera(s, fixtures::ring_poses(s, 0)[0]);
    const auto r = fixtures::render_fixture(s, cam);
    const fixtures::Sphere sph{Vec3(0.4, 0.3, 0.0), 0.35, {}};
    double px = 0, py = 0;
    ASSERT_TRUE(cam.project(sph.center, px, py));
    const int u = static_cast<int>(px), v = static_cast<int>(py);
    const Vec3 d = cam.direction_through(u + 0.5, v + 0.5).normalized();
    const auto t = fixtures::intersect(sph, cam.position(), d);
    ASSERT_TRUE(t.has_value());
    EXPECT_LE(r.depth.at(u, v), *t + 1e-12);
}

TEST(Fixtures, UnknownPresetAndOutOfBounds) {
    EXPECT_THROW(fixtures::preset("teapot"), Error);
    fixtures::ToyScene s;
    s.primitives.emplace_back(fixtures::Sphere{Vec3(0.9, 0, 0), 0.5, {}});
    EXPECT_THROW(fixtures::generate(s), Error);
}

}  // namespace
}  // namespace liprf
