#include "test_util.hpp"

#include "gausssurf/level_set.hpp"

using namespace gausssurf;
using namespace testutil;

namespace {

SyntheticScene small_sphere(int n_views = 6)
{
    SyntheticSpec spec;
    spec.n_gaussians = 1500;
    spec.n_views = n_views;
    spec.n_holdout = 0;
    spec.width = spec.height = 64;   // at 40px silhouette pixels push the yield below 0.9
    spec.seed = 5;
    return make_synthetic_scene(spec);
}

} // namespace

TEST_CASE("directional_std")
{
    Gaussian3D iso;
    iso.log_scale = Vec3::Constant(std::log(0.3));
    CHECK(directional_std(iso, Vec3(1, 2, -1).normalized()) == doctest::Approx(0.3).epsilon(1e-12));

    Gaussian3D diag;
    diag.log_scale = Vec3(0, std::log(2.0), std::log(3.0));
    CHECK(directional_std(diag, Vec3::UnitY()) == doctest::Approx(2.0).epsilon(1e-12));

    std::mt19937_64 rng(3);
    const Vec4 q = random_quat(rng);
    Gaussian3D rotated = diag;
    rotated.rot = q;
    const Vec3 v = quat_to_rotation(q) * Vec3(1, 1, 0).normalized();
    CHECK(directional_std(rotated, v) == doctest::Approx(directional_std(diag, Vec3(1, 1, 0).normalized())).epsilon(1e-12));
    CHECK(GaussianTerm(rotated).directional_std(v) == doctest::Approx(directional_std(rotated, v)).epsilon(1e-12));
}

TEST_CASE("ray_level_crossing on a flat wall")
{
    const double s = 0.05;
    Scene wall;
    Gaussian3D g;
    g.mean = Vec3(0.1, -0.2, 2.0);
    g.log_scale = Vec3(std::log(10.0), std::log(10.0), std::log(s));
    g.opacity_logit = 40;
    wall.gaussians.push_back(g);
    const DensityField field(wall);
    LevelSetConfig cfg;
    cfg.lambda = std::exp(-0.5);

    const Vec3 v = Vec3(0.1, 0.05, 1.0).normalized();
    // depth point: where the ray from the origin meets the center plane
    const Vec3 p = v * (2.0 / v.z());
    CrossingStatus status;
    const auto hit = ray_level_crossing(p, v, 0, field, cfg, &status);
    REQUIRE(hit.has_value());
    CHECK(status == CrossingStatus::Found);
    // plane distance s on the camera side
    CHECK(std::abs(hit->point.z() - (2.0 - s)) < 1e-3 * s);
    CHECK(hit->normal.dot(v) < 0);
    // the finite tangent extent tilts the gradient slightly
    CHECK(hit->normal.isApprox(-Vec3::UnitZ(), 1e-3));
    CHECK(std::abs(field.density(hit->point) - cfg.lambda) <= 1e-3 * cfg.lambda);

    // coarse scan alone lands within one sample spacing
    LevelSetConfig coarse = cfg;
    coarse.residual_tol = 1.0;
    const auto rough = ray_level_crossing(p, v, 0, field, coarse);
    REQUIRE(rough.has_value());
    const double spacing = 2 * 3 * field.term(0).directional_std(v) / 20.0;
    CHECK(std::abs((rough->point - p).dot(v) + s / v.z()) < spacing);

    LevelSetConfig high = cfg;
    high.lambda = 1.5;
    CHECK_FALSE(ray_level_crossing(p, v, 0, field, high, &status).has_value());
    CHECK(status == CrossingStatus::NoCrossing);
    // a ray that stays far away from the wall
    CHECK_FALSE(ray_level_crossing(Vec3(0, 0, -5), v, 0, field, cfg).has_value());
}

TEST_CASE("sample_level_set on the synthetic sphere")
{
    const SyntheticScene syn = small_sphere();
    LevelSetConfig cfg;
    cfg.n_rays_per_view = 300;
    cfg.seed = 4;
    LevelSetStats stats;
    const OrientedPointCloud cloud = sample_level_set(syn.scene, syn.cameras, cfg, &stats);
    CHECK(stats.rays == 6u * 300u);
    CHECK(stats.yield() >= 0.9);
    CHECK(cloud.size() <= syn.cameras.size() * 300);

    const NeighborIndex index = rebuild_index(syn.scene);
    const DensityField field(syn.scene, index);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(std::abs(field.density(cloud.points[i]) - cfg.lambda) <= 1e-3 * cfg.lambda);
        CHECK(std::abs(cloud.normals[i].norm() - 1.0) < 1e-6);
        const Vec3 to_cam = syn.cameras[cloud.view_id[i]].center() - cloud.points[i];
        CHECK(cloud.normals[i].dot(to_cam) > 0);
        // sphere of radius 1 with thin scale 0.01
        CHECK(std::abs(syn.surface.sdf(cloud.points[i])) < 0.05);
    }

    const OrientedPointCloud again = sample_level_set(syn.scene, syn.cameras, cfg);
    CHECK(again.points == cloud.points);

    // dropping a camera never adds points
    const auto fewer = sample_level_set(syn.scene, std::span<const Camera>(syn.cameras).first(5), cfg);
    CHECK(fewer.size() <= cloud.size());

    LevelSetConfig high = cfg;
    high.lambda = 50.0;
    CHECK_THROWS_AS(sample_level_set(syn.scene, syn.cameras, high), EmptyCloudError);
    LevelSetConfig bad = cfg;
    bad.n_samples_per_ray = 1;
    CHECK_THROWS_AS(sample_level_set(syn.scene, syn.cameras, bad), ValidationError);
}

TEST_CASE("split_fg_bg and point cloud PLY")
{
    std::vector<Camera> cams;
    // ring of radius 3 at alternating heights so the camera box has volume
    for (int i = 0; i < 8; ++i) {
        const double a = 2 * M_PI * i / 8;
        cams.push_back(Camera::look_at(Vec3(3 * std::cos(a), 3 * std::sin(a), i % 2 ? 1.5 : -1.5), Vec3::Zero(),
                                       Vec3::UnitZ(), 16, 16, 1.0));
    }
    OrientedPointCloud cloud;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 200; ++i) {
        const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
        cloud.push_back(d, d, i % 8);
    }
    cloud.push_back(Vec3(600, 0, 0), Vec3::UnitX(), 0);
    const auto [fg, bg] = split_fg_bg(cloud, cams);
    CHECK(fg.size() == 200);
    REQUIRE(bg.size() == 1);
    CHECK(bg.points[0].x() == 600);

    const auto path = (temp_dir("level_set") / "points.ply").string();
    save_point_cloud_ply(cloud, path);
    const OrientedPointCloud back = load_point_cloud_ply(path);
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK((back.points[i] - cloud.points[i]).norm() < 1e-4);
        CHECK((back.normals[i] - cloud.normals[i]).norm() < 1e-6);
        CHECK(back.view_id[i] == cloud.view_id[i]);
    }
}
