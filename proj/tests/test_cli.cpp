#include "test_util.hpp"

#include "gausssurf/cli.hpp"
#include "gausssurf/mesh.hpp"
#include "gausssurf/surface_bind.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace gausssurf;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "gausssurf");
    std::ostringstream out, err;
    Result r;
    r.code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

nlohmann::json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Every output listed by the manifest exists and matches its recorded size.
std::vector<std::string> checked_outputs(const fs::path& dir)
{
    const auto m = read_json(dir / "manifest.json");
    std::vector<std::string> paths;
    for (const auto& o : m.at("outputs")) {
        const fs::path p = dir / o.at("path").get<std::string>();
        CHECK(fs::exists(p));
        if (fs::exists(p)) CHECK(fs::file_size(p) == o.at("bytes").get<std::uintmax_t>());
        paths.push_back(o.at("path").get<std::string>());
    }
    return paths;
}

void require_ok(const Result& r)
{
    CAPTURE(r.err);
    REQUIRE(r.code == kExitOk);
}

// Small synth -> train -> extract-mesh -> bind -> refine -> eval run under root.
void pipeline(const fs::path& root)
{
    const std::string s = (root / "synth").string(), t = (root / "train").string(), m = (root / "mesh").string(),
                      b = (root / "bind").string(), r = (root / "refine").string(), e = (root / "eval").string();
    const std::vector<std::string> common = {"--seed", "5", "--threads", "1"};
    auto with = [&](std::vector<std::string> args) {
        args.insert(args.end(), common.begin(), common.end());
        return cli(args);
    };
    require_ok(with({"synth", "--n-gaussians", "600", "--views", "6", "--holdout", "2", "--width", "32", "--height",
                     "32", "--noise", "0.02", "--out", s}));
    require_ok(with({"train", "--scene", s + "/scene.ply", "--cameras", s + "/cameras.json", "--images",
                     s + "/images/train", "--iters-free", "10", "--iters-entropy", "10", "--iters", "20",
                     "--n-reg-points", "256", "--out", t}));
    require_ok(with({"extract-mesh", "--scene", t + "/trained.ply", "--cameras", s + "/cameras.json", "--grid", "32",
                     "--target-verts", "800", "--rays-per-view", "400", "--out", m}));
    require_ok(with({"bind", "--mesh", m + "/mesh.ply", "--scene", t + "/trained.ply", "--n-per-tri", "1", "--out", b}));
    require_ok(with({"refine", "--bound", b + "/bound", "--cameras", s + "/cameras.json", "--images",
                     s + "/images/train", "--iters", "6", "--checkpoint-every", "3", "--out", r}));
    require_ok(with({"eval", "--bound", r + "/refined", "--cameras", s + "/holdout_cameras.json", "--images",
                     s + "/images/holdout", "--mesh", m + "/mesh.ply", "--surface", s + "/surface.json",
                     "--samples", "2000", "--out", e}));
}

} // namespace

TEST_CASE("cli: usage errors exit 1, runtime errors exit 2")
{
    const auto dir = temp_dir("cli_codes");
    Result r = cli({});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("Usage:") != std::string::npos);

    r = cli({"synth", "--bogus", "--out", (dir / "x").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("--bogus") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "x"));

    r = cli({"frobnicate"});
    CHECK(r.code == kExitUsage);

    r = cli({"--help"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("extract-mesh") != std::string::npos);

    r = cli({"train", "--scene", (dir / "missing.ply").string(), "--cameras", "c.json", "--images", ".", "--out",
             (dir / "t").string()});
    CHECK(r.code == kExitUsage);

    r = cli({"synth", "--surface", "torus", "--out", (dir / "x").string()});
    CHECK(r.code == kExitUsage);

    r = cli({"eval", "--mesh", "nope.ply", "--out", (dir / "e").string()});
    CHECK(r.code == kExitUsage);

    // lambda above the peak density: nothing to reconstruct
    const std::string s = (dir / "s").string();
    require_ok(cli({"synth", "--n-gaussians", "300", "--views", "4", "--holdout", "0", "--width", "24", "--height",
                    "24", "--out", s}));
    r = cli({"extract-mesh", "--scene", s + "/scene.ply", "--cameras", s + "/cameras.json", "--lambda", "50", "--out",
             (dir / "m").string()});
    CHECK(r.code == kExitRuntime);
    CHECK(r.err.find("no level-set points") != std::string::npos);

    // a corrupt input file is a runtime error
    {
        std::ofstream bad(dir / "bad.ply");
        bad << "ply\nformat ascii 1.0\nend_header\n";
    }
    r = cli({"extract-mesh", "--scene", (dir / "bad.ply").string(), "--cameras", s + "/cameras.json", "--out",
             (dir / "m").string()});
    CHECK(r.code == kExitRuntime);
}

TEST_CASE("cli: the installed binary reports the same exit codes")
{
    const auto dir = temp_dir("cli_binary");
    const std::string bin = GAUSSSURF_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int raw = std::system((bin + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("--version") == 0);
    CHECK(status("synth --unknown-flag --out " + (dir / "x").string()) == 1);
    CHECK(status("bind --mesh " + (dir / "log.txt").string() + " --out " + (dir / "b").string()) == 2);
}

TEST_CASE("cli: synth is deterministic and writes a manifest")
{
    const auto dir = temp_dir("cli_synth");
    const std::vector<std::string> args = {"synth", "--surface", "sphere", "--seed", "7", "--n-gaussians", "400",
                                           "--views", "4", "--holdout", "2", "--width", "24", "--height", "24"};
    auto a = args, b = args;
    a.insert(a.end(), {"--out", (dir / "a").string()});
    b.insert(b.end(), {"--out", (dir / "b").string(), "--threads", "3"});
    require_ok(cli(a));
    require_ok(cli(b));

    const auto outputs = checked_outputs(dir / "a");
    CHECK(outputs.size() == 5 + 4 + 2);
    for (const auto& p : outputs) {
        CAPTURE(p);
        CHECK(slurp(dir / "a" / p) == slurp(dir / "b" / p));
    }
    const auto ma = read_json(dir / "a" / "manifest.json"), mb = read_json(dir / "b" / "manifest.json");
    CHECK(ma["command"] == "synth");
    CHECK(ma["seed"] == 7);
    CHECK(ma["config"]["n-gaussians"] == "400");
    CHECK(ma["config"]["noise"] == "0");
    CHECK(ma["config_hash"] == mb["config_hash"]);
    CHECK(ma["outputs"] == mb["outputs"]);
    CHECK(ma["versions"].contains("eigen"));
    CHECK(ma["timings"].contains("render"));

    // another seed changes the artifacts
    auto c = args;
    c[4] = "8";
    c.insert(c.end(), {"--out", (dir / "c").string()});
    require_ok(cli(c));
    CHECK(slurp(dir / "a" / "scene.ply") != slurp(dir / "c" / "scene.ply"));
    CHECK(read_json(dir / "c" / "manifest.json")["config_hash"] != ma["config_hash"]);
}

TEST_CASE("cli: config file sits between defaults and flags")
{
    const auto dir = temp_dir("cli_config");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"seed": 3, "synth": {"n-gaussians": 250, "views": 3, "holdout": 0, "width": 20, "height": 22}})";
    }
    require_ok(cli({"--config", (dir / "cfg.json").string(), "synth", "--width", "26", "--out", (dir / "o").string()}));
    const auto m = read_json(dir / "o" / "manifest.json");
    CHECK(m["seed"] == 3);
    CHECK(m["config"]["n-gaussians"] == "250");
    CHECK(m["config"]["width"] == "26");
    CHECK(m["config"]["height"] == "22");
    CHECK(m["config"]["radius"] == "1");
    const Image img = read_png((dir / "o" / "images" / "train" / "000.png").string());
    CHECK(img.width == 26);
    CHECK(img.height == 22);

    {
        std::ofstream cfg(dir / "broken.json");
        cfg << "{ not json";
    }
    CHECK(cli({"--config", (dir / "broken.json").string(), "synth", "--out", (dir / "p").string()}).code == kExitUsage);
}

TEST_CASE("cli: full pipeline writes a metric report and is reproducible")
{
    const auto dir = temp_dir("cli_pipeline");
    pipeline(dir / "run1");

    const auto e = dir / "run1" / "eval";
    const auto report = read_json(e / "metrics.json");
    CHECK(report["views"].size() == 2);
    CHECK(report["lpips"].is_null());
    CHECK(report["geometry"]["chamfer"].get<double>() > 0);
    CHECK(report["geometry"]["chamfer"].get<double>() < 0.2);
    CHECK(report["mean_psnr"].get<double>() > 15);
    CHECK(fs::exists(e / "metrics.csv"));

    for (const char* stage : {"synth", "train", "mesh", "bind", "refine", "eval"}) {
        CAPTURE(stage);
        CHECK_FALSE(checked_outputs(dir / "run1" / stage).empty());
    }
    CHECK(fs::exists(dir / "run1" / "refine" / "checkpoint_000003.bound"));
    CHECK(fs::exists(dir / "run1" / "refine" / "checkpoint_000006.obj"));
    const BoundScene refined = load_bound_scene((dir / "run1" / "refine" / "refined").string());
    CHECK(refined.n_per_triangle == 1);

    // rendering a bound scene
    const std::string s = (dir / "run1" / "synth").string();
    require_ok(cli({"render", "--bound", (dir / "run1" / "refine" / "refined").string(), "--cameras",
                    s + "/holdout_cameras.json", "--depth", "--out", (dir / "render").string()}));
    CHECK(fs::exists(dir / "render" / "001.png"));
    CHECK(fs::exists(dir / "render" / "001_depth.bin"));
    CHECK(cli({"render", "--cameras", s + "/holdout_cameras.json", "--out", (dir / "render2").string()}).code ==
          kExitUsage);

    // fixed seed and one thread: byte-identical artifacts
    pipeline(dir / "run2");
    for (const char* stage : {"synth", "train", "mesh", "bind", "refine", "eval"}) {
        for (const auto& p : checked_outputs(dir / "run1" / stage)) {
            CAPTURE(p);
            CHECK(slurp(dir / "run1" / stage / p) == slurp(dir / "run2" / stage / p));
        }
    }
}
