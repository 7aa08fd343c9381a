#pragma once

// Command-line driver: reconstruct -> stylize -> render / interpolate, plus
// metrics, verify and fixtures. Exit codes: 0 success, 1 usage, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "liprf/checkpoint.hpp"
#include "liprf/common.hpp"
#include "liprf/config.hpp"
#include "liprf/fixtures.hpp"
#include "liprf/metrics.hpp"
#include "liprf/pst.hpp"
#include "liprf/render.hpp"
#include "liprf/scene_io.hpp"
#include "liprf/train.hpp"
#include "liprf/verify.hpp"

namespace liprf::cli {

namespace fs = std::filesystem;

/// Checkpoint config snapshot: training config, manifest and scene directory.
struct Snapshot {
    TrainConfig train;
    SceneManifest manifest;
    std::string scene_dir;
    std::optional<double> k_mkl;
};

inline std::string snapshot_json(const Snapshot& s) {
    nlohmann::json j{{"train", to_json(s.train)}, {"manifest", manifest_to_json(s.manifest)}, {"scene_dir", s.scene_dir}};
    if (s.k_mkl) j["k_mkl"] = *s.k_mkl;
    return j.dump();
}

inline Snapshot parse_snapshot(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Snapshot s;
        s.train = config_from_json(j.at("train"));
        s.manifest = parse_manifest(j.at("manifest"));
        s.scene_dir = j.at("scene_dir").get<std::string>();
        if (j.contains("k_mkl")) s.k_mkl = j.at("k_mkl").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("checkpoint: corrupt config snapshot: ") + e.what());
    }
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("corrupt config '" + path + "': " + e.what());
    }
    return config_from_json(j, base);
}

/// Stylized field and background of a checkpoint (baked for stage 2).
struct RenderableField {
    VoxelField field;
    Vec3 background;
};

inline RenderableField renderable(const Checkpoint& c, const Snapshot& s) {
    if (c.stage == Stage::Recon) return {c.field, s.manifest.background};
    const Vec3 bg = s.train.stylize_background ? transform_background(*c.net, c.field, s.manifest.background)
                                               : s.manifest.background;
    return {bake_field(c.field, *c.net, s.train.gga_batch), bg};
}

inline void render_all(const VoxelField& field, const Vec3& bg, const SceneManifest& cams, int samples,
                       const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    for (std::size_t i = 0; i < cams.poses.size(); ++i) {
        const RenderedView r = render_view(cams.camera(i), field, {samples, bg});
        const std::string stem = fixtures::frame_name(i);
        write_image(r.image, out / (stem + ".png"));
        write_pfm(surface_depth(r.depth, r.opacity), out / (stem + "_depth.pfm"));
    }
    log << "rendered " << cams.poses.size() << " views to " << out.string() << '\n';
}

inline std::string format_double(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

struct Options {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string config;

    std::string scene, out, ckpt, style, stylized_dir, poses, renders, depth, suite = "all", preset = "two_object";
    std::string mode = "global", span = "short", save_targets;
    double alpha = 0.0;
    std::int64_t trials = 100000;
    std::optional<double> lambda, k_est;
    std::optional<int> epochs;
    bool stylize_background = false;
};

inline TrainConfig effective_config(const Options& o, TrainConfig base) {
    if (!o.config.empty()) base = load_config_file(o.config, base);
    base.seed = o.seed;
    if (o.lambda) base.lambda = *o.lambda;
    if (o.k_est) base.k_est_override = *o.k_est;
    if (o.epochs) base.epochs = *o.epochs;
    if (o.stylize_background) base.stylize_background = true;
    base.validate();
    return base;
}

inline int cmd_reconstruct(const Options& o, std::ostream& out) {
    const SceneDataset ds = load_scene(o.scene);
    TrainConfig cfg = effective_config(o, {});
    std::vector<ReconEpoch> hist;
    const VoxelField field = train_reconstruction(ds, cfg, &hist);
    Snapshot snap{cfg, read_manifest(fs::path(o.scene) / "scene.json"), fs::absolute(o.scene).lexically_normal().string(), {}};
    save_checkpoint({Stage::Recon, cfg.seed, snapshot_json(snap), field, std::nullopt}, o.out);
    out << "train psnr " << format_double(train_psnr(field, ds, cfg.samples)) << " dB\n";
    out << "wrote " << o.out << '\n';
    return 0;
}

inline int cmd_stylize(const Options& o, std::ostream& out) {
    const Checkpoint src = load_checkpoint(o.ckpt);
    if (src.stage != Stage::Recon) throw Error("stylize expects a stage-1 checkpoint");
    Snapshot snap = parse_snapshot(src.config);
    snap.train = effective_config(o, snap.train);
    SceneDataset ds = load_scene(snap.scene_dir);
    if (!o.style.empty()) {
        const auto mode = o.mode == "per_view" ? pst::StylizeMode::PerView : pst::StylizeMode::Global;
        ds.stylized_views = pst::stylize_views(ds, read_image(o.style), mode).images;
    } else {
        const fs::path dir = fs::path(o.stylized_dir);
        ds.stylized_views = load_stylized_dir(snap.manifest, dir);
    }
    if (!o.save_targets.empty()) {
        fs::create_directories(o.save_targets);
        for (std::size_t i = 0; i < ds.stylized_views->size(); ++i)
            write_image((*ds.stylized_views)[i], fs::path(o.save_targets) / fs::path(snap.manifest.files[i]).filename());
    }
    LiprfSummary sum;
    const LipschitzNet net = train_liprf(src.field, ds, snap.train, &sum);
    snap.k_mkl = sum.k_mkl;
    save_checkpoint({Stage::Liprf, snap.train.seed, snapshot_json(snap), src.field, net}, o.out);
    out << "K_est " << format_double(sum.k_mkl, 6) << '\n';
    out << "lipschitz_constant " << format_double(sum.final_lipschitz, 6) << '\n';
    out << "loss initial " << sum.initial_objective << " final " << sum.final_objective << '\n';
    out << "wrote " << o.out << '\n';
    return 0;
}

inline int cmd_render(const Options& o, std::ostream& out) {
    const Checkpoint c = load_checkpoint(o.ckpt);
    const Snapshot snap = parse_snapshot(c.config);
    const SceneManifest cams = o.poses.empty() ? snap.manifest : read_manifest(o.poses);
    const RenderableField r = renderable(c, snap);
    render_all(r.field, r.background, cams, snap.train.samples, o.out, out);
    return 0;
}

inline int cmd_interpolate(const Options& o, std::ostream& out) {
    const Checkpoint c = load_checkpoint(o.ckpt);
    if (c.stage != Stage::Liprf) throw Error("interpolate expects a stage-2 checkpoint");
    const Snapshot snap = parse_snapshot(c.config);
    const RenderableField styl = renderable(c, snap);
    const VoxelField f = interpolate_fields(c.field, styl.field, o.alpha);
    const Vec3 src_bg = snap.manifest.background;
    const Vec3 bg = o.alpha == 0.0 ? src_bg : o.alpha == 1.0 ? styl.background : o.alpha * styl.background + (1.0 - o.alpha) * src_bg;
    const SceneManifest cams = o.poses.empty() ? snap.manifest : read_manifest(o.poses);
    render_all(f, bg, cams, snap.train.samples, o.out, out);
    return 0;
}

inline int cmd_metrics(const Options& o, std::ostream& out) {
    const SceneManifest m = read_manifest(fs::path(o.scene) / "scene.json");
    std::vector<Image> images;
    std::vector<ScalarMap> depths;
    for (std::size_t i = 0; i < m.files.size(); ++i) {
        const std::string stem = fs::path(m.files[i]).stem().string();
        const fs::path img = fs::path(o.renders) / (stem + ".png");
        if (!fs::exists(img)) throw Error("missing image '" + img.string() + "'");
        images.push_back(read_image(img));
        std::vector<fs::path> candidates;
        if (!o.depth.empty()) {
            candidates = {fs::path(o.depth) / (stem + "_depth.pfm"), fs::path(o.depth) / (stem + ".pfm")};
        } else {
            candidates = {fs::path(o.renders) / (stem + "_depth.pfm"), fs::path(o.scene) / "depth" / (stem + ".pfm")};
        }
        std::optional<ScalarMap> d;
        for (const auto& p : candidates)
            if (fs::exists(p)) {
                d = read_pfm(p);
                break;
            }
        if (!d) throw Error("no depth map for view '" + stem + "'");
        depths.push_back(std::move(*d));
    }
    const Span span = o.span == "long" ? Span::Long : Span::Short;
    const auto rep = consistency_report(images, m.cameras(), depths, span, m.bounds.extent().norm());
    out << "pair\ttc\ttc_psnr\n";
    for (const auto& p : rep.pairs)
        out << p.i << "-" << p.j << '\t' << std::scientific << std::setprecision(4) << p.tc << '\t'
            << format_double(p.tc_psnr) << '\n';
    out << "mean\t-\t" << format_double(rep.mean_tc_psnr) << '\n';
    return 0;
}

inline int cmd_verify(const Options& o, std::ostream& out) {
    std::vector<std::string> suites;
    if (o.suite == "all") suites = verify::suite_names();
    else suites.push_back(o.suite);
    std::int64_t violations = 0;
    out << "suite\ttrials\tviolations\tmax_ratio\ttolerance\n";
    for (const auto& s : suites) {
        const auto r = verify::run_suite(s, o.trials, o.seed);
        violations += r.violations;
        out << r.suite << '\t' << r.trials << '\t' << r.violations << '\t' << std::setprecision(6) << r.max_ratio << '\t'
            << r.tolerance << '\n';
    }
    return violations == 0 ? 0 : 2;
}

inline int cmd_fixtures(const Options& o, std::ostream& out) {
    const auto m = fixtures::generate_scene(fixtures::preset(o.preset), o.out, o.seed);
    out << "wrote " << m.files.size() << " views to " << o.out << '\n';
    return 0;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Lipschitz radiance-field style transfer", "liprf"};
    app.fallthrough();
    app.require_subcommand(1);
    Options o;
    app.add_option("--seed", o.seed, "random seed")->default_val(0);
    app.add_option("--threads", o.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--config", o.config, "JSON file overriding training settings")->check(CLI::ExistingFile);

    auto* rec = app.add_subcommand("reconstruct", "stage 1: fit the voxel field to posed images");
    rec->add_option("--scene", o.scene, "scene directory")->required()->check(CLI::ExistingDirectory);
    rec->add_option("--out", o.out, "checkpoint to write")->required();

    auto* sty = app.add_subcommand("stylize", "stage 2: train the Lipschitz network");
    sty->add_option("--ckpt", o.ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
    auto* style = sty->add_option("--style", o.style, "style image (MKL stylization)")->check(CLI::ExistingFile);
    auto* sdir = sty->add_option("--stylized-dir", o.stylized_dir, "pre-stylized views")->check(CLI::ExistingDirectory);
    style->excludes(sdir);
    sdir->excludes(style);
    sty->add_option("--mode", o.mode, "MKL statistics pooling")->check(CLI::IsMember({"global", "per_view"}));
    sty->add_option("--save-targets", o.save_targets, "write the stylized training views here");
    sty->add_option("--lambda", o.lambda, "Lipschitz regularization weight");
    sty->add_option("--k-est", o.k_est, "override the regularization target");
    sty->add_option("--epochs", o.epochs, "training epochs");
    sty->add_flag("--stylize-background", o.stylize_background, "apply the network to the background color");
    sty->add_option("--out", o.out, "checkpoint to write")->required();

    auto* ren = app.add_subcommand("render", "render a checkpoint");
    ren->add_option("--ckpt", o.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    ren->add_option("--out", o.out, "output directory")->required();
    ren->add_option("--poses", o.poses, "scene.json with cameras to render")->check(CLI::ExistingFile);

    auto* itp = app.add_subcommand("interpolate", "blend source and stylized appearance");
    itp->add_option("--ckpt", o.ckpt, "stage-2 checkpoint")->required()->check(CLI::ExistingFile);
    itp->add_option("--alpha", o.alpha, "blend weight")->required()->check(CLI::Range(0.0, 1.0));
    itp->add_option("--out", o.out, "output directory")->required();
    itp->add_option("--poses", o.poses, "scene.json with cameras to render")->check(CLI::ExistingFile);

    auto* met = app.add_subcommand("metrics", "temporal consistency of rendered views");
    met->add_option("--scene", o.scene, "scene directory")->required()->check(CLI::ExistingDirectory);
    met->add_option("--renders", o.renders, "directory of NNN.png images")->required()->check(CLI::ExistingDirectory);
    met->add_option("--depth", o.depth, "directory of depth maps")->check(CLI::ExistingDirectory);
    met->add_option("--span", o.span, "pair stride")->check(CLI::IsMember({"short", "long"}));

    auto* ver = app.add_subcommand("verify", "numerical certification suites");
    ver->add_option("--suite", o.suite, "suite")->check(
        CLI::IsMember({"prop1", "prop2", "prop3", "lemma1", "lemma2", "grad", "gga", "all"}));
    ver->add_option("--trials", o.trials, "trials per suite")->check(CLI::PositiveNumber);

    auto* fix = app.add_subcommand("fixtures", "generate a synthetic scene");
    fix->add_option("--preset", o.preset, "preset")->check(CLI::IsMember({"two_object", "slab", "occluder"}));
    fix->add_option("--out", o.out, "output directory")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
        if (sty->parsed() && o.style.empty() && o.stylized_dir.empty()) {
            throw CLI::ValidationError("stylize needs --style or --stylized-dir");
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    set_threads(o.threads);
    Eigen::setNbThreads(1);
    try {
        if (rec->parsed()) return cmd_reconstruct(o, out);
        if (sty->parsed()) return cmd_stylize(o, out);
        if (ren->parsed()) return cmd_render(o, out);
        if (itp->parsed()) return cmd_interpolate(o, out);
        if (met->parsed()) return cmd_metrics(o, out);
        if (ver->parsed()) return cmd_verify(o, out);
        if (fix->parsed()) return cmd_fixtures(o, out);
    } catch (const std::exception& e) {
        err << "liprf: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace liprf::cli
