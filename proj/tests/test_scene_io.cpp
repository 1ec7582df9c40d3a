#include "test_util.hpp"

#include "gausssurf/ply.hpp"

#include <fstream>

using namespace gausssurf;
using namespace testutil;

namespace {

// Writes a degree-0 splat PLY from explicit per-vertex values, in the
// reference property order, optionally dropping one property.
void write_raw_splat_ply(const std::string& path, const std::vector<std::vector<float>>& rows,
                         const std::string& drop = "")
{
    const std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                                            "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
                                            "rot_2", "rot_3"};
    std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(rows.size()) + "\n";
    for (const auto& n : names) {
        if (n != drop) header += "property float " + n + "\n";
    }
    header += "end_header\n";
    std::vector<char> payload;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] != drop) ply::append(payload, row[i]);
        }
    }
    ply::write_file(path, header, payload);
}

std::vector<float> default_row()
{
    return {0.1f, 0.2f, 0.3f, 0, 0, 0, 0.5f, 0.4f, 0.3f, 0.0f, -2.0f, -2.5f, -3.0f, 1, 0, 0, 0};
}

std::vector<char> file_bytes(const std::string& path) { return ply::read_file(path); }

} // namespace

TEST_CASE("splat PLY: opacity logit 0 activates to 0.5")
{
    const auto dir = temp_dir("ply_opacity");
    const auto path = (dir / "one.ply").string();
    write_raw_splat_ply(path, {default_row()});
    const Scene s = load_gaussian_ply(path);
    REQUIRE(s.size() == 1);
    CHECK(s.sh_degree == 0);
    CHECK(s.gaussians[0].opacity() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.gaussians[0].scales()[0] == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("splat PLY: quaternion is renormalized on load")
{
    const auto dir = temp_dir("ply_quat");
    const auto path = (dir / "q.ply").string();
    auto row = default_row();
    row[13] = 2.0f;
    write_raw_splat_ply(path, {row});
    const Scene s = load_gaussian_ply(path);
    CHECK(s.gaussians[0].rot == Vec4(1, 0, 0, 0));
}

TEST_CASE("splat PLY: missing property and empty scene are reported")
{
    const auto dir = temp_dir("ply_errors");
    const auto path = (dir / "bad.ply").string();
    write_raw_splat_ply(path, {default_row()}, "scale_1");
    try {
        load_gaussian_ply(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("scale_1") != std::string::npos);
    }
    write_raw_splat_ply(path, {});
    CHECK_THROWS_AS(load_gaussian_ply(path), EmptySceneError);
    CHECK_THROWS_AS(load_gaussian_ply((dir / "missing.ply").string()), IoError);
}

TEST_CASE("splat PLY: save/load/save is byte-identical and loads reproduce floats")
{
    const auto dir = temp_dir("ply_roundtrip");
    Scene s = random_scene(100, 42, 1);
    const auto a = (dir / "a.ply").string();
    const auto b = (dir / "b.ply").string();
    save_gaussian_ply(s, a);
    const Scene loaded = load_gaussian_ply(a);
    save_gaussian_ply(loaded, b);
    CHECK(file_bytes(a) == file_bytes(b));

    REQUIRE(loaded.size() == s.size());
    CHECK(loaded.sh_degree == 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& g0 = s.gaussians[i];
        const auto& g1 = loaded.gaussians[i];
        for (int k = 0; k < 3; ++k) {
            CHECK(static_cast<float>(g0.mean[k]) == static_cast<float>(g1.mean[k]));
            CHECK(static_cast<float>(g0.log_scale[k]) == static_cast<float>(g1.log_scale[k]));
        }
        for (std::size_t c = 0; c < g0.sh.size(); ++c) {
            CHECK(g0.sh[c].cast<float>() == g1.sh[c].cast<float>());
        }
        CHECK(static_cast<float>(g0.opacity_logit) == static_cast<float>(g1.opacity_logit));
    }
}

TEST_CASE("splat PLY: file size is header plus fixed-size records")
{
    const auto dir = temp_dir("ply_size");
    const auto path = (dir / "big.ply").string();
    const Scene s = random_scene(10000, 3, 0);
    save_gaussian_ply(s, path);
    const auto bytes = file_bytes(path);
    const auto header = ply::parse_header(bytes, path);
    // 17 float32 properties for degree 0.
    CHECK(gaussian_record_size(0) == 17 * 4);
    CHECK(bytes.size() == header.data_offset + 10000 * gaussian_record_size(0));
    CHECK_THROWS_AS(save_gaussian_ply(s, ""), IoError);
}

TEST_CASE("quaternion normalization is idempotent")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 3);
    for (int i = 0; i < 200; ++i) {
        Vec4 q(n(rng), n(rng), n(rng), n(rng));
        normalize_quat(q);
        const Vec4 once = q;
        CHECK(std::abs(q.norm() - 1.0) < 1e-6);
        CHECK_FALSE(normalize_quat(q));
        CHECK(q == once);
    }
}

TEST_CASE("cameras: conventions, validation and round trip")
{
    const std::string identity = R"([{"width": 64, "height": 48, "fx": 100, "fy": 100, "cx": 32, "cy": 24,
        "world_to_cam": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}])";
    const auto cv = parse_cameras(identity);
    REQUIRE(cv.size() == 1);
    CHECK(cv[0].center().norm() < 1e-15);
    CHECK(cv[0].pixel_ray(32, 24).isApprox(Vec3(0, 0, 1)));

    const std::string gl = R"({"convention": "opengl", "cameras": [{"width": 64, "height": 48, "fx": 100, "fy": 100,
        "cx": 32, "cy": 24, "world_to_cam": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]})";
    const auto ogl = parse_cameras(gl);
    CHECK(ogl[0].pixel_ray(32, 24).isApprox(Vec3(0, 0, -1)));
    CHECK(ogl[0].project(Vec3(0, 0, -2)).has_value());
    CHECK_FALSE(ogl[0].project(Vec3(0, 0, 2)).has_value());

    const std::string short_pose = R"([{"width": 4, "height": 4, "fx": 1, "fy": 1, "cx": 2, "cy": 2,
        "world_to_cam": [1,0,0,0, 0,1,0,0, 0,0,1,0]}])";
    CHECK_THROWS_AS(parse_cameras(short_pose), FormatError);

    const std::string skewed = R"([{"width": 4, "height": 4, "fx": 1, "fy": 1, "cx": 2, "cy": 2,
        "world_to_cam": [1,0.01,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}])";
    CHECK_THROWS_AS(parse_cameras(skewed), ValidationError);

    SyntheticSpec spec;
    spec.n_gaussians = 10;
    const auto cams = make_synthetic_scene(spec).cameras;
    const auto dir = temp_dir("cams");
    const auto path = (dir / "cams.json").string();
    save_cameras(cams, path);
    const auto back = load_cameras(path);
    REQUIRE(back.size() == cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        CHECK((back[i].world_to_cam - cams[i].world_to_cam).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(back[i].fx == cams[i].fx);
        CHECK(back[i].cy == cams[i].cy);
    }
}

TEST_CASE("synthetic sphere: means on the surface, thin axis along the normal")
{
    SyntheticSpec spec;
    spec.n_gaussians = 1000;
    spec.seed = 11;
    const auto syn = make_synthetic_scene(spec);
    REQUIRE(syn.scene.size() == 1000);
    syn.scene.validate();
    for (const auto& g : syn.scene.gaussians) {
        CHECK(std::abs(syn.surface.sdf(g.mean)) < 1e-9);
        const Vec3 axis = g.rotation().col(g.thin_axis());
        CHECK(std::abs(std::abs(axis.dot(g.mean.normalized())) - 1.0) < 1e-9);
        CHECK(g.opacity() > 0.999);
    }
    for (const auto& cam : syn.cameras) {
        CHECK_NOTHROW(cam.validate());
    }
}

TEST_CASE("synthetic plane: thin axes equal the plane normal")
{
    SyntheticSpec spec;
    spec.surface = SurfaceKind::Plane;
    spec.normal = Vec3(1, 2, 2);
    spec.offset = 0.5;
    spec.n_gaussians = 200;
    const auto syn = make_synthetic_scene(spec);
    const Vec3 n = spec.normal.normalized();
    for (const auto& g : syn.scene.gaussians) {
        const Vec3 axis = g.rotation().col(g.thin_axis());
        CHECK(std::abs(std::abs(axis.dot(n)) - 1.0) < 1e-9);
        CHECK(std::abs(syn.surface.sdf(g.mean)) < 1e-9);
    }
}

TEST_CASE("synthetic scenes: seed determinism and noise bound")
{
    SyntheticSpec spec;
    spec.surface = SurfaceKind::Box;
    spec.n_gaussians = 300;
    spec.noise = 0.02;
    spec.seed = 99;
    const auto a = make_synthetic_scene(spec);
    const auto b = make_synthetic_scene(spec);
    for (std::size_t i = 0; i < a.scene.size(); ++i) {
        CHECK(a.scene.gaussians[i].mean == b.scene.gaussians[i].mean);
        CHECK(a.scene.gaussians[i].rot == b.scene.gaussians[i].rot);
        CHECK(a.scene.gaussians[i].sh[0] == b.scene.gaussians[i].sh[0]);
    }
    spec.surface = SurfaceKind::Sphere;
    const auto s = make_synthetic_scene(spec);
    double worst = 0;
    for (const auto& g : s.scene.gaussians) {
        worst = std::max(worst, std::abs(s.surface.sdf(g.mean)));
    }
    CHECK(worst <= spec.noise + 1e-12);
    CHECK(worst > 0);

    spec.n_gaussians = 0;
    CHECK_THROWS_AS(make_synthetic_scene(spec), ValidationError);
}
