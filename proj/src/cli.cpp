#include "gausssurf/cli.hpp"

#include "gausssurf/eval.hpp"
#include "gausssurf/level_set.hpp"
#include "gausssurf/parallel.hpp"
#include "gausssurf/poisson_mesh.hpp"
#include "gausssurf/regularizer.hpp"
#include "gausssurf/scene_io.hpp"
#include "gausssurf/surface_bind.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <png.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace gausssurf {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

std::string file_fingerprint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return hex64(h);
}

namespace {

// JSON config files: top-level keys are global options, nested objects are
// subcommand sections ({"extract-mesh": {"lambda": 0.2}}).
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override
    {
        nlohmann::json j;
        try {
            input >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        flatten(j, {}, items);
        return items;
    }

private:
    static void flatten(const nlohmann::json& j, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items)
    {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it->is_object()) {
                auto sub = parents;
                sub.push_back(it.key());
                flatten(*it, sub, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            auto scalar = [&](const nlohmann::json& v) -> std::string {
                if (v.is_string()) return v.get<std::string>();
                if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
                if (v.is_number()) return v.dump();
                throw CLI::ConversionError("config key '" + it.key() + "' has an unsupported value");
            };
            if (it->is_array()) {
                for (const auto& v : *it) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(*it));
            }
            items.push_back(std::move(item));
        }
    }
};

struct Globals {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string log_level = "info";
};

// Collects outputs and stage timings, then writes manifest.json beside them.
class RunContext {
public:
    RunContext(std::string command, const std::string& out_dir, const Globals& g, const std::vector<std::string>& args)
        : command_(std::move(command)), out_(out_dir), globals_(g), args_(args)
    {
        fs::create_directories(out_);
    }

    const fs::path& dir() const { return out_; }
    std::string path(const std::string& name) const { return (out_ / name).string(); }

    /// Input paths are echoed relative to the output directory so reports do not
    /// depend on where a pipeline was run.
    std::string relative(const std::string& p) const
    {
        return fs::relative(fs::absolute(p), fs::absolute(out_)).generic_string();
    }

    /// Registers a file written under the output directory.
    void output(const std::string& p) { outputs_.push_back(fs::relative(fs::path(p), out_).generic_string()); }

    template <typename Fn>
    auto time(const std::string& stage, Fn&& fn)
    {
        const auto t0 = std::chrono::steady_clock::now();
        struct Stop {
            RunContext* self;
            std::string stage;
            std::chrono::steady_clock::time_point t0;
            ~Stop()
            {
                self->timings_[stage] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        } stop{this, stage, t0};
        return fn();
    }

    void write_manifest(const CLI::App& sub) const
    {
        ojson config = ojson::object();
        for (const CLI::Option* opt : sub.get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
            const std::string& name = opt->get_lnames()[0];
            if (opt->count() > 0) {
                const auto& res = opt->results();
                config[name] = res.size() == 1 ? ojson(res[0]) : ojson(res);
            } else if (opt->get_type_size() == 0) {
                config[name] = false;
            } else {
                config[name] = opt->get_default_str();
            }
        }
        ojson j;
        j["command"] = command_;
        j["arguments"] = args_;
        j["seed"] = globals_.seed;
        j["threads"] = num_threads();
        j["config"] = config;
        // the fingerprint covers what shapes the results: settings and seed, not where they go
        ojson hashed = config;
        hashed.erase("out");
        hashed["seed"] = globals_.seed;
        const std::string cfg_text = hashed.dump();
        j["config_hash"] = hex64(fnv1a64(cfg_text.data(), cfg_text.size()));
        j["versions"] = {{"gausssurf", kVersion},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                       "." + std::to_string(EIGEN_MINOR_VERSION)},
                         {"libpng", PNG_LIBPNG_VER_STRING},
                         {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                                        std::to_string(SPDLOG_VER_PATCH)},
                         {"cli11", CLI11_VERSION}};
        j["outputs"] = ojson::array();
        for (const auto& rel : outputs_) {
            const fs::path p = out_ / rel;
            if (!fs::exists(p)) throw IoError("listed output '" + p.string() + "' is missing");
            j["outputs"].push_back({{"path", rel}, {"bytes", fs::file_size(p)}, {"fnv1a64", file_fingerprint(p.string())}});
        }
        j["timings"] = ojson::object();
        for (const auto& [k, v] : timings_) j["timings"][k] = v;
        std::ofstream f(out_ / "manifest.json");
        if (!f) throw IoError("cannot write manifest in '" + out_.string() + "'");
        f << j.dump(2) << '\n';
    }

private:
    std::string command_;
    fs::path out_;
    Globals globals_;
    std::vector<std::string> args_;
    std::vector<std::string> outputs_;
    std::map<std::string, double> timings_;
};

std::vector<Image> load_images(const std::string& dir, std::size_t expected)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.size() != expected) {
        throw ValidationError("'" + dir + "' holds " + std::to_string(files.size()) + " PNG images for " +
                              std::to_string(expected) + " cameras");
    }
    std::vector<Image> images;
    for (const auto& f : files) images.push_back(read_png(f.string()));
    return images;
}

std::string image_name(std::size_t i)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu.png", i);
    return buf;
}

ojson surface_to_json(const GroundTruthSurface& s)
{
    return {{"kind", to_string(s.kind)},
            {"center", {s.center.x(), s.center.y(), s.center.z()}},
            {"radius", s.radius},
            {"extents", {s.extents.x(), s.extents.y(), s.extents.z()}},
            {"normal", {s.normal.x(), s.normal.y(), s.normal.z()}},
            {"offset", s.offset},
            {"patch_half_size", s.patch_half_size}};
}

GroundTruthSurface load_surface(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        auto vec = [&](const char* key) {
            const auto& a = j.at(key);
            return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
        };
        GroundTruthSurface s;
        s.kind = parse_surface_kind(j.at("kind").get<std::string>());
        s.center = vec("center");
        s.radius = j.at("radius").get<double>();
        s.extents = vec("extents");
        s.normal = vec("normal");
        s.offset = j.at("offset").get<double>();
        s.patch_half_size = j.at("patch_half_size").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

void write_json(const ojson& j, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << j.dump(2) << '\n';
}

ojson report_to_json(const ExtractionReport& r)
{
    auto poisson = [](const PoissonStats& s) {
        return ojson{{"res", s.res},
                     {"spacing", s.spacing},
                     {"cg_iterations", s.cg_iterations},
                     {"cg_residual", s.cg_residual},
                     {"iso", s.iso},
                     {"faces_before_filter", s.faces_before_filter}};
    };
    ojson j;
    j["lambda"] = r.lambda;
    j["grid"] = r.res;
    j["rays"] = r.level.rays;
    j["points"] = r.level.points;
    j["yield"] = r.level.yield();
    j["fg_points"] = r.fg_points;
    j["bg_points"] = r.bg_points;
    j["fg_poisson"] = poisson(r.fg);
    j["bg_poisson"] = r.bg_skipped ? ojson(nullptr) : poisson(r.bg);
    j["vertices_before_decimation"] = r.vertices_before_decimation;
    j["collapses"] = r.decimation.collapses;
    return j;
}


void save_images(const std::vector<Image>& images, const fs::path& dir, RunContext& ctx)
{
    fs::create_directories(dir);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string p = (dir / image_name(i)).string();
        write_png(images[i], p);
        ctx.output(p);
    }
}

// ---------------------------------------------------------------------------
// subcommands

struct SynthArgs {
    std::string surface = "sphere";
    int n_gaussians = 5000;
    int views = 24;
    int holdout = 8;
    int width = 64;
    int height = 64;
    double noise = 0;
    double thin_ratio = 0.01;
    double radius = 1.0;
};

void cmd_synth(const SynthArgs& a, const Globals& g, RunContext& ctx, std::ostream& out)
{
    SyntheticSpec spec;
    spec.surface = parse_surface_kind(a.surface);
    spec.n_gaussians = a.n_gaussians;
    spec.n_views = a.views;
    spec.n_holdout = a.holdout;
    spec.width = a.width;
    spec.height = a.height;
    spec.thin_ratio = a.thin_ratio;
    spec.radius = a.radius;
    spec.seed = g.seed;
    // images always come from the clean scene; --noise only perturbs the initial one
    const SyntheticScene truth = ctx.time("generate", [&] { return make_synthetic_scene(spec); });
    Scene init = truth.scene;
    if (a.noise > 0) {
        spec.noise = a.noise;
        init = make_synthetic_scene(spec).scene;
    }

    auto render_all = [&](const std::vector<Camera>& cams) {
        std::vector<Image> imgs(cams.size());
        for (std::size_t i = 0; i < cams.size(); ++i) imgs[i] = render_image(truth.scene, cams[i]);
        return imgs;
    };
    const auto train_imgs = ctx.time("render", [&] { return render_all(truth.cameras); });
    const auto holdout_imgs = ctx.time("render_holdout", [&] { return render_all(truth.holdout_cameras); });

    save_gaussian_ply(truth.scene, ctx.path("gt_scene.ply"));
    ctx.output(ctx.path("gt_scene.ply"));
    save_gaussian_ply(init, ctx.path("scene.ply"));
    ctx.output(ctx.path("scene.ply"));
    save_cameras(truth.cameras, ctx.path("cameras.json"));
    ctx.output(ctx.path("cameras.json"));
    save_cameras(truth.holdout_cameras, ctx.path("holdout_cameras.json"));
    ctx.output(ctx.path("holdout_cameras.json"));
    save_images(train_imgs, ctx.dir() / "images" / "train", ctx);
    save_images(holdout_imgs, ctx.dir() / "images" / "holdout", ctx);
    write_json(surface_to_json(truth.surface), ctx.path("surface.json"));
    ctx.output(ctx.path("surface.json"));
    out << "synth: " << truth.scene.size() << " Gaussians on a " << a.surface << ", " << truth.cameras.size()
        << " training and " << truth.holdout_cameras.size() << " held-out views -> " << ctx.dir().string() << '\n';
}

struct TrainArgs {
    std::string scene, cameras, images;
    int iters_free = 7000;
    int iters_entropy = 2000;
    int iters = 6000;
    int n_reg_points = 1024;
    double prune_alpha = 0.5;
};

void cmd_train(const TrainArgs& a, const Globals& g, RunContext& ctx, std::ostream& out)
{
    const Scene scene = load_gaussian_ply(a.scene);
    const auto cams = load_cameras(a.cameras);
    const auto images = load_images(a.images, cams.size());
    TrainConfig cfg;
    cfg.iters_free = a.iters_free;
    cfg.iters_entropy = a.iters_entropy;
    cfg.iters_reg = a.iters;
    cfg.n_reg_points = a.n_reg_points;
    cfg.prune_alpha = a.prune_alpha;
    cfg.seed = g.seed;
    cfg.snapshot_path = ctx.path("nan_snapshot.ply");
    TrainLog log;
    const Scene trained = ctx.time("train", [&] { return train(scene, images, cams, cfg, &log); });
    save_gaussian_ply(trained, ctx.path("trained.ply"));
    ctx.output(ctx.path("trained.ply"));
    log.write_csv(ctx.path("train_log.csv"));
    ctx.output(ctx.path("train_log.csv"));
    out << "train: " << cfg.total_iters() << " iterations, " << scene.size() << " -> " << trained.size()
        << " Gaussians (" << log.pruned << " pruned)\n";
}

struct ExtractArgs {
    std::string scene, cameras;
    double lambda = 0.3;
    int grid = 128;
    std::size_t target_verts = 200000;
    int rays_per_view = 4096;
    std::string method = "poisson";
    std::string format = "ply";
};

void cmd_extract(const ExtractArgs& a, const Globals& g, RunContext& ctx, std::ostream& out)
{
    const Scene scene = load_gaussian_ply(a.scene);
    const auto cams = load_cameras(a.cameras);
    TriangleMesh mesh;
    ojson report;
    if (a.method == "poisson") {
        ExtractOptions opts;
        opts.level.lambda = a.lambda;
        opts.level.n_rays_per_view = a.rays_per_view;
        opts.level.seed = g.seed;
        opts.poisson.res = a.grid;
        opts.target_vertices = a.target_verts;
        ExtractionReport rep;
        mesh = ctx.time("extract", [&] { return extract_mesh(scene, cams, opts, &rep); });
        report = report_to_json(rep);
    } else {
        mesh = ctx.time("marching_cubes", [&] { return density_marching_cubes(scene, a.lambda, a.grid); });
        report["lambda"] = a.lambda;
        report["grid"] = a.grid;
        report["vertices_before_decimation"] = mesh.n_vertices();
        if (a.target_verts > 0 && mesh.n_vertices() > a.target_verts) {
            mesh = ctx.time("decimate", [&] { return decimate_qem(mesh, a.target_verts); });
        }
        compute_vertex_normals(mesh);
    }
    report["method"] = a.method;
    report["vertices"] = mesh.n_vertices();
    report["faces"] = mesh.n_faces();
    const std::string mesh_path = ctx.path("mesh." + a.format);
    save_mesh(mesh, mesh_path);
    ctx.output(mesh_path);
    write_json(report, ctx.path("extraction.json"));
    ctx.output(ctx.path("extraction.json"));
    out << "extract-mesh: " << mesh.n_vertices() << " vertices, " << mesh.n_faces() << " faces -> " << mesh_path
        << '\n';
}

struct BindArgs {
    std::string mesh, scene;
    int n_per_tri = 0;
    std::string format = "obj";
};

void cmd_bind(const BindArgs& a, const Globals&, RunContext& ctx, std::ostream& out)
{
    TriangleMesh mesh = load_mesh(a.mesh);
    const std::size_t faces = mesh.n_faces();
    mesh = remove_degenerate(mesh, 1e-12);
    if (mesh.n_faces() != faces) spdlog::info("dropped {} degenerate faces before binding", faces - mesh.n_faces());
    std::optional<Scene> init;
    if (!a.scene.empty()) init = load_gaussian_ply(a.scene);
    const int n = a.n_per_tri > 0 ? a.n_per_tri : default_n_per_triangle(mesh.n_vertices());
    const BoundScene bs =
        ctx.time("bind", [&] { return bind_gaussians(mesh, n, init ? &*init : nullptr); });
    save_bound_scene(bs, ctx.path("bound"), "." + a.format);
    ctx.output(ctx.path("bound." + a.format));
    ctx.output(ctx.path("bound.bound"));
    export_splat_ply(bs, ctx.path("bound_splats.ply"));
    ctx.output(ctx.path("bound_splats.ply"));
    out << "bind: " << bs.size() << " Gaussians on " << mesh.n_faces() << " faces (" << n << " per triangle)\n";
}

struct RefineArgs {
    std::string bound, cameras, images;
    int iters = 2000;
    double normal_weight = 0.1;
    double lr_vertex = 1e-4;
    int checkpoint_every = 0;
    std::string format = "obj";
};

void cmd_refine(const RefineArgs& a, const Globals& g, RunContext& ctx, std::ostream& out)
{
    const BoundScene bs = load_bound_scene(a.bound);
    const auto cams = load_cameras(a.cameras);
    const auto images = load_images(a.images, cams.size());
    RefineConfig cfg;
    cfg.iters = a.iters;
    cfg.normal_weight = a.normal_weight;
    cfg.lr_vertex = a.lr_vertex;
    cfg.seed = g.seed;
    cfg.snapshot_prefix = ctx.path("nan_snapshot");
    cfg.checkpoint_every = a.checkpoint_every;
    const std::string ext = "." + a.format;
    cfg.on_checkpoint = [&](int it, const BoundScene& s) {
        char name[32];
        std::snprintf(name, sizeof name, "checkpoint_%06d", it);
        save_bound_scene(s, ctx.path(name), ext);
        ctx.output(ctx.path(std::string(name) + ext));
        ctx.output(ctx.path(std::string(name) + ".bound"));
    };
    RefineLog log;
    const BoundScene refined = ctx.time("refine", [&] { return refine(bs, images, cams, cfg, &log); });
    save_bound_scene(refined, ctx.path("refined"), ext);
    ctx.output(ctx.path("refined" + ext));
    ctx.output(ctx.path("refined.bound"));
    export_splat_ply(refined, ctx.path("refined_splats.ply"));
    ctx.output(ctx.path("refined_splats.ply"));
    std::ofstream csv(ctx.path("refine_log.csv"));
    log.write_csv(csv);
    csv.close();
    ctx.output(ctx.path("refine_log.csv"));
    out << "refine: " << a.iters << " iterations on " << refined.size() << " bound Gaussians\n";
}

struct RenderArgs {
    std::string scene, bound, cameras;
    bool depth = false;
};

Scene load_any_scene(const std::string& scene, const std::string& bound)
{
    if (!bound.empty()) return bound_scene_to_world(load_bound_scene(bound));
    return load_gaussian_ply(scene);
}

void cmd_render(const RenderArgs& a, const Globals&, RunContext& ctx, std::ostream& out)
{
    const Scene scene = load_any_scene(a.scene, a.bound);
    const auto cams = load_cameras(a.cameras);
    ctx.time("render", [&] {
        for (std::size_t i = 0; i < cams.size(); ++i) {
            const ForwardPass fwd = rasterize(scene, cams[i]);
            const std::string p = ctx.path(image_name(i));
            write_png(fwd.color, p);
            ctx.output(p);
            if (a.depth) {
                const std::string stem = ctx.path(image_name(i).substr(0, 3) + "_depth");
                write_depth_map(fwd.depth, stem + ".bin", stem + ".json");
                ctx.output(stem + ".bin");
                ctx.output(stem + ".json");
            }
        }
        return 0;
    });
    out << "render: " << cams.size() << " views of " << scene.size() << " Gaussians\n";
}

struct EvalArgs {
    std::string scene, bound, cameras, images;
    std::string mesh, surface, reference_mesh;
    std::size_t samples = 100000;
};

void cmd_eval(const EvalArgs& a, const Globals& g, RunContext& ctx, std::ostream& out)
{
    MetricReport report;
    const bool images = !a.scene.empty() || !a.bound.empty();
    if (images) {
        if (a.cameras.empty() || a.images.empty()) {
            throw CLI::ValidationError("image metrics need --cameras and --images");
        }
        const Scene scene = load_any_scene(a.scene, a.bound);
        const auto cams = load_cameras(a.cameras);
        const auto refs = load_images(a.images, cams.size());
        ctx.time("image_metrics", [&] {
            for (std::size_t i = 0; i < cams.size(); ++i) {
                const Image img = render_image(scene, cams[i]);
                ViewMetrics v;
                v.name = image_name(i).substr(0, 3);
                v.psnr = psnr(img, refs[i], &v.identical);
                v.ssim = ssim(img, refs[i]);
                report.views.push_back(v);
            }
            return 0;
        });
        report.config["source"] = ctx.relative(a.bound.empty() ? a.scene : a.bound);
    }
    if (!a.mesh.empty()) {
        if (a.surface.empty() == a.reference_mesh.empty()) {
            throw CLI::ValidationError("geometry metrics need exactly one of --surface or --reference-mesh");
        }
        const TriangleMesh mesh = load_mesh(a.mesh);
        report.geometry = ctx.time("geometry_metrics", [&] {
            return a.surface.empty() ? chamfer_hausdorff(mesh, load_mesh(a.reference_mesh), a.samples, g.seed)
                                     : chamfer_hausdorff(mesh, load_surface(a.surface), a.samples, g.seed);
        });
        report.config["mesh"] = ctx.relative(a.mesh);
        report.config["reference"] = ctx.relative(a.surface.empty() ? a.reference_mesh : a.surface);
    }
    if (!images && a.mesh.empty()) throw CLI::ValidationError("nothing to evaluate: give --scene/--bound or --mesh");
    report.config["samples"] = std::to_string(a.samples);
    report.config["seed"] = std::to_string(g.seed);
    report.save(ctx.path("metrics.json"), ctx.path("metrics.csv"));
    ctx.output(ctx.path("metrics.json"));
    ctx.output(ctx.path("metrics.csv"));
    out << "eval:";
    if (images) out << " mean PSNR " << report.mean_psnr() << " dB, mean SSIM " << report.mean_ssim();
    if (report.geometry) out << " chamfer " << report.geometry->chamfer << " hausdorff " << report.geometry->hausdorff;
    out << '\n';
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app("Surface-aligned Gaussian splatting: training, mesh extraction and mesh-bound refinement",
                 args.empty() ? "gausssurf" : fs::path(args[0]).filename().string());
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; command-line flags take precedence");
    app.set_version_flag("--version", kVersion);

    Globals g;
    app.add_option("--seed", g.seed, "Seed for all randomness");
    app.add_option("--threads", g.threads, "Worker threads (default: GAUSSSURF_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    std::string out_dir;
    auto sub = [&](const char* name, const char* desc) {
        CLI::App* s = app.add_subcommand(name, desc);
        s->add_option("--out", out_dir, "Output directory")->required();
        return s;
    };
    const auto existing = CLI::ExistingFile;
    auto bound_prefix = CLI::Validator(
        [](std::string& p) { return fs::exists(p + ".bound") ? std::string() : "no bound table at " + p + ".bound"; },
        "PREFIX");

    SynthArgs synth;
    CLI::App* s_synth = sub("synth", "Generate a synthetic scene, cameras and ground-truth images");
    s_synth->add_option("--surface", synth.surface, "sphere, box or plane")
        ->check(CLI::IsMember({"sphere", "box", "plane"}));
    s_synth->add_option("--n-gaussians", synth.n_gaussians)->check(CLI::PositiveNumber);
    s_synth->add_option("--views", synth.views)->check(CLI::PositiveNumber);
    s_synth->add_option("--holdout", synth.holdout)->check(CLI::NonNegativeNumber);
    s_synth->add_option("--width", synth.width)->check(CLI::PositiveNumber);
    s_synth->add_option("--height", synth.height)->check(CLI::PositiveNumber);
    s_synth->add_option("--noise", synth.noise, "Max offset of the initial scene's means along the normal")
        ->check(CLI::NonNegativeNumber);
    s_synth->add_option("--thin-ratio", synth.thin_ratio)->check(CLI::PositiveNumber);
    s_synth->add_option("--radius", synth.radius)->check(CLI::PositiveNumber);

    TrainArgs tr;
    CLI::App* s_train = sub("train", "Photometric training, entropy phase and SDF / normal regularization");
    s_train->add_option("--scene", tr.scene, "Initial splat PLY")->required()->check(existing);
    s_train->add_option("--cameras", tr.cameras)->required()->check(existing);
    s_train->add_option("--images", tr.images, "Directory of PNGs in camera order")->required()->check(
        CLI::ExistingDirectory);
    s_train->add_option("--iters-free", tr.iters_free)->check(CLI::NonNegativeNumber);
    s_train->add_option("--iters-entropy", tr.iters_entropy)->check(CLI::NonNegativeNumber);
    s_train->add_option("--iters", tr.iters, "Regularization iterations")->check(CLI::NonNegativeNumber);
    s_train->add_option("--n-reg-points", tr.n_reg_points)->check(CLI::PositiveNumber);
    s_train->add_option("--prune-alpha", tr.prune_alpha)->check(CLI::Range(0.0, 1.0));

    ExtractArgs ex;
    CLI::App* s_extract = sub("extract-mesh", "Level-set points, Poisson reconstruction and decimation");
    s_extract->add_option("--scene", ex.scene)->required()->check(existing);
    s_extract->add_option("--cameras", ex.cameras)->required()->check(existing);
    s_extract->add_option("--lambda", ex.lambda, "Density level")->check(CLI::PositiveNumber);
    s_extract->add_option("--grid", ex.grid, "Poisson grid resolution")->check(CLI::Range(8, 1024));
    s_extract->add_option("--target-verts", ex.target_verts, "Decimation target (0 keeps every vertex)");
    s_extract->add_option("--rays-per-view", ex.rays_per_view)->check(CLI::PositiveNumber);
    s_extract->add_option("--method", ex.method, "poisson, or density for marching cubes on the density")
        ->check(CLI::IsMember({"poisson", "density"}));
    s_extract->add_option("--format", ex.format)->check(CLI::IsMember({"ply", "obj"}));

    BindArgs bi;
    CLI::App* s_bind = sub("bind", "Bind flat Gaussians to the triangles of a mesh");
    s_bind->add_option("--mesh", bi.mesh)->required()->check(existing);
    s_bind->add_option("--scene", bi.scene, "Splat PLY to take colors from")->check(existing);
    s_bind->add_option("--n-per-tri", bi.n_per_tri, "1, 3 or 6 (default: 6 up to 200k vertices, else 1)")
        ->check(CLI::IsMember({0, 1, 3, 6}));
    s_bind->add_option("--format", bi.format)->check(CLI::IsMember({"ply", "obj"}));

    RefineArgs re;
    CLI::App* s_refine = sub("refine", "Jointly optimize the mesh and its bound Gaussians");
    s_refine->add_option("--bound", re.bound, "Bound scene prefix")->required()->check(bound_prefix);
    s_refine->add_option("--cameras", re.cameras)->required()->check(existing);
    s_refine->add_option("--images", re.images)->required()->check(CLI::ExistingDirectory);
    s_refine->add_option("--iters", re.iters)->check(CLI::NonNegativeNumber);
    s_refine->add_option("--normal-weight", re.normal_weight)->check(CLI::NonNegativeNumber);
    s_refine->add_option("--lr-vertex", re.lr_vertex, "Vertex learning rate, times the scene scale")
        ->check(CLI::NonNegativeNumber);
    s_refine->add_option("--checkpoint-every", re.checkpoint_every)->check(CLI::NonNegativeNumber);
    s_refine->add_option("--format", re.format)->check(CLI::IsMember({"ply", "obj"}));

    RenderArgs rn;
    CLI::App* s_render = sub("render", "Render a splat scene or bound scene");
    auto* rn_scene = s_render->add_option("--scene", rn.scene)->check(existing);
    auto* rn_bound = s_render->add_option("--bound", rn.bound)->check(bound_prefix);
    rn_scene->excludes(rn_bound);
    s_render->add_option("--cameras", rn.cameras)->required()->check(existing);
    s_render->add_flag("--depth", rn.depth, "Also write depth maps");

    EvalArgs ev;
    CLI::App* s_eval = sub("eval", "Image and geometry metrics");
    auto* ev_scene = s_eval->add_option("--scene", ev.scene)->check(existing);
    auto* ev_bound = s_eval->add_option("--bound", ev.bound)->check(bound_prefix);
    ev_scene->excludes(ev_bound);
    s_eval->add_option("--cameras", ev.cameras)->check(existing);
    s_eval->add_option("--images", ev.images, "Reference PNGs in camera order")->check(CLI::ExistingDirectory);
    s_eval->add_option("--mesh", ev.mesh)->check(existing);
    auto* ev_surface = s_eval->add_option("--surface", ev.surface, "Ground-truth surface JSON")->check(existing);
    auto* ev_ref = s_eval->add_option("--reference-mesh", ev.reference_mesh)->check(existing);
    ev_surface->excludes(ev_ref);
    s_eval->add_option("--samples", ev.samples)->check(CLI::Range(1000, 100000000));

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
        if (s_render->parsed() && rn.scene.empty() && rn.bound.empty()) {
            throw CLI::RequiredError("render needs --scene or --bound");
        }
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(kVersion) + "\n" : app.help());
            return kExitOk;
        }
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("gausssurf", sink);
    logger->set_level(spdlog::level::from_str(g.log_level));
    logger->set_pattern("[%l] %v");
    const auto previous = spdlog::default_logger();
    spdlog::set_default_logger(logger);
    struct RestoreLogger {
        std::shared_ptr<spdlog::logger> prev;
        ~RestoreLogger() { spdlog::set_default_logger(prev); }
    } restore{previous};
    set_num_threads(g.threads);

    CLI::App* chosen = app.get_subcommands().front();
    try {
        RunContext ctx(chosen->get_name(), out_dir, g, args);
        if (chosen == s_synth) cmd_synth(synth, g, ctx, out);
        if (chosen == s_train) cmd_train(tr, g, ctx, out);
        if (chosen == s_extract) cmd_extract(ex, g, ctx, out);
        if (chosen == s_bind) cmd_bind(bi, g, ctx, out);
        if (chosen == s_refine) cmd_refine(re, g, ctx, out);
        if (chosen == s_render) cmd_render(rn, g, ctx, out);
        if (chosen == s_eval) cmd_eval(ev, g, ctx, out);
        ctx.write_manifest(*chosen);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n\n" << chosen->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int run(int argc, const char* const* argv)
{
    return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

} // namespace gausssurf
