#include "test_util.hpp"

#include "gausssurf/density.hpp"

#include <algorithm>

using namespace gausssurf;
using namespace testutil;

namespace {

Gaussian3D flat_gaussian(const Vec3& mean, const Vec4& rot, double tangent, double thin, int thin_axis = 2)
{
    Gaussian3D g;
    g.mean = mean;
    g.rot = rot;
    g.log_scale = Vec3::Constant(std::log(tangent));
    g.log_scale[thin_axis] = std::log(thin);
    g.opacity_logit = 40.0;   // sigmoid rounds to 1 in double precision
    return g;
}

double brute_density(const Vec3& p, const Scene& s)
{
    double d = 0;
    for (const auto& g : s.gaussians) {
        const Mat3 cov = g.covariance();
        const Vec3 dl = p - g.mean;
        d += g.opacity() * std::exp(-0.5 * dl.dot(cov.inverse() * dl));
    }
    return d;
}

Vec3 random_point_near(const Scene& s, std::mt19937_64& rng, double spread)
{
    std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
    std::normal_distribution<double> n(0.0, spread);
    return s.gaussians[pick(rng)].mean + Vec3(n(rng), n(rng), n(rng));
}

} // namespace

TEST_CASE("rebuild_index matches brute-force K-NN")
{
    const Scene small = random_scene(3, 1);
    const NeighborIndex si = rebuild_index(small);
    CHECK(si.k_effective == 3);
    for (int g = 0; g < 3; ++g) {
        std::vector<int> ids(si.neighbors(g).begin(), si.neighbors(g).end());
        std::sort(ids.begin(), ids.end());
        CHECK(ids == std::vector<int>{0, 1, 2});
    }

    const Scene scene = random_scene(200, 7);
    const NeighborIndex index = rebuild_index(scene);
    REQUIRE(index.k_effective == 16);
    CHECK(index.stale_counter == 0);
    for (std::size_t g = 0; g < scene.size(); ++g) {
        std::vector<std::pair<double, int>> all;
        for (std::size_t j = 0; j < scene.size(); ++j) {
            all.emplace_back((scene.gaussians[j].mean - scene.gaussians[g].mean).squaredNorm(), static_cast<int>(j));
        }
        std::sort(all.begin(), all.end());
        const auto got = index.neighbors(static_cast<int>(g));
        for (int k = 0; k < 16; ++k) {
            CHECK(got[k] == all[k].second);
        }
    }
}

TEST_CASE("k-d tree breaks distance ties toward lower ids")
{
    // Lattice points: many exactly equal distances from the query.
    std::vector<Vec3> pts;
    for (int x = -2; x <= 2; ++x)
        for (int y = -2; y <= 2; ++y)
            for (int z = -2; z <= 2; ++z) pts.emplace_back(x, y, z);
    const KdTree tree(pts, 2);
    const auto nn = tree.knn(Vec3::Zero(), 7);
    std::vector<std::pair<double, int>> ref;
    for (std::size_t i = 0; i < pts.size(); ++i) ref.emplace_back(pts[i].squaredNorm(), static_cast<int>(i));
    std::sort(ref.begin(), ref.end());
    for (int k = 0; k < 7; ++k) CHECK(nn[k] == ref[k]);
    CHECK(tree.nearest(Vec3(0.1, 1.9, -1.2)).first == 5 * 5 * 2 + 5 * 4 + 1);
}

TEST_CASE("density: hand-evaluated cases")
{
    Scene one;
    one.gaussians.push_back(Gaussian3D{});
    one.gaussians[0].opacity_logit = 0.7;
    one.gaussians[0].mean = Vec3(1, 2, 3);
    const NeighborIndex i1 = rebuild_index(one);
    CHECK(density(one.gaussians[0].mean, one, i1) == doctest::Approx(sigmoid(0.7)).epsilon(1e-15));
    CHECK(density_gradient(one.gaussians[0].mean, one, i1).norm() == 0.0);

    // isotropic sigma=1: grad = -alpha e^{-r^2/2} (p - mu)
    const Vec3 p(1.5, 2.5, 2.0);
    const Vec3 dl = p - one.gaussians[0].mean;
    const Vec3 expect = -sigmoid(0.7) * std::exp(-0.5 * dl.squaredNorm()) * dl;
    CHECK((density_gradient(p, one, i1) - expect).norm() < 1e-15);

    Scene two;
    two.gaussians.resize(2);
    two.gaussians[0].mean = Vec3(-1, 0, 0);
    two.gaussians[1].mean = Vec3(1, 0, 0);
    for (auto& g : two.gaussians) g.opacity_logit = 40.0;
    const DensityField exact(two);
    CHECK(exact.density(Vec3::Zero()) == doctest::Approx(2 * std::exp(-0.5)).epsilon(1e-14));
    CHECK(exact.closest_gaussian(Vec3::Zero()) == 0);   // tie -> lowest id
    CHECK(exact.closest_gaussian(Vec3(0.1, 0, 0)) == 1);
}

TEST_CASE("scale floor keeps degenerate Gaussians finite")
{
    Scene s;
    s.gaussians.push_back(Gaussian3D{});
    s.gaussians[0].log_scale = Vec3(0, 0, -60);
    const DensityField f(s);
    const FieldSample fs = f.sample(Vec3(0.1, 0.2, 1e-9));
    CHECK(std::isfinite(fs.d));
    CHECK(fs.grad_d.allFinite());
    CHECK(f.term(0).thin_scale == kScaleFloor);
}

TEST_CASE("neighborhood sum tracks the exact sum near the means")
{
    const Scene scene = random_scene(50, 11, 0, 1.0, -2.0, -1.5);
    const NeighborIndex index = rebuild_index(scene);
    const DensityField fast(scene, index), exact(scene);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p = random_point_near(scene, rng, 0.05);
        const double de = exact.density(p);
        CHECK(std::abs(fast.density(p) - de) <= 1e-3 * de);
        CHECK(std::abs(de - brute_density(p, scene)) <= 1e-12 * std::max(1.0, de));
    }
}

TEST_CASE("closest_gaussian is the Mahalanobis argmin")
{
    // B is nearer in Euclidean terms but very thin along the query offset.
    Scene s;
    s.gaussians.push_back(flat_gaussian(Vec3(0, 0, 0), Vec4(1, 0, 0, 0), 0.5, 0.5));
    s.gaussians.push_back(flat_gaussian(Vec3(0, 0, 0.6), Vec4(1, 0, 0, 0), 1.0, 0.01));
    const Vec3 p(0, 0, 0.35);
    CHECK((p - s.gaussians[1].mean).norm() < (p - s.gaussians[0].mean).norm());
    CHECK(DensityField(s).closest_gaussian(p) == 0);

    const Scene scene = random_scene(120, 19, 0, 1.0, -3.0, -1.0);
    const DensityField exact(scene);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 300; ++i) {
        const Vec3 p = random_point_near(scene, rng, 0.2);
        int best = -1;
        double best_m = 1e300;
        for (std::size_t g = 0; g < scene.size(); ++g) {
            const Vec3 dl = p - scene.gaussians[g].mean;
            const double m = dl.dot(scene.gaussians[g].covariance().inverse() * dl);
            if (m < best_m) {
                best_m = m;
                best = static_cast<int>(g);
            }
        }
        CHECK(exact.closest_gaussian(p) == best);
    }
}

TEST_CASE("ideal density and ideal SDF of a flat Gaussian")
{
    std::mt19937_64 rng(31);
    const double s = 0.01;
    Scene scene;
    scene.gaussians.push_back(flat_gaussian(Vec3(0.2, -0.4, 1.1), random_quat(rng), 1.0, s, 1));
    const NeighborIndex index = rebuild_index(scene);
    const DensityField field(scene, index);
    const Vec3 n = scene.gaussians[0].rotation().col(1);
    const Vec3 t1 = scene.gaussians[0].rotation().col(0);

    CHECK(field.ideal_density(scene.gaussians[0].mean + 0.3 * t1) == doctest::Approx(1.0));
    CHECK(field.ideal_density(scene.gaussians[0].mean + s * n) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(ideal_sdf_magnitude(1.0, s) == doctest::Approx(s * std::sqrt(2e-12)).epsilon(1e-3));
    CHECK(ideal_sdf_magnitude(std::exp(-2.0), s) == doctest::Approx(2 * s).epsilon(1e-14));

    // On the thin axis through the mean the two densities coincide.
    for (double t : {-2.0, -0.5, 0.3, 1.7}) {
        const Vec3 p = scene.gaussians[0].mean + t * s * n;
        CHECK(field.ideal_density(p) == doctest::Approx(field.density(p)).epsilon(1e-12));
    }

    // |f| recovers the point-plane distance.
    std::uniform_real_distribution<double> ut(-3 * s, 3 * s);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const double t = ut(rng);
        // Stay on the thin axis in-plane too: the tangent falloff would lower d.
        const Vec3 p = scene.gaussians[0].mean + t * n;
        worst = std::max(worst, std::abs(field.ideal_sdf(p) - std::abs(t)));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("density_gradient matches central differences")
{
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        const Scene scene = random_scene(40, seed, 0, 1.0, -1.8, -0.8);
        const NeighborIndex index = rebuild_index(scene);
        const DensityField field(scene, index);
        const double h = 1e-5 * 2.0;
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 100; ++i) {
            const Vec3 p = random_point_near(scene, rng, 0.1);
            const auto nearest = index.tree.nearest(p).first;
            const Vec3 g = field.density_gradient(p);
            for (int a = 0; a < 3; ++a) {
                Vec3 dp = Vec3::Zero();
                dp[a] = h;
                // Skip the rare case where the step changes the neighborhood.
                if (index.tree.nearest(p + dp).first != nearest || index.tree.nearest(p - dp).first != nearest) continue;
                const double num = (field.density(p + dp) - field.density(p - dp)) / (2 * h);
                CHECK(std::abs(g[a] - num) <= std::max(1e-5 * std::abs(num), 1e-8));
            }
        }
    }
}

TEST_CASE("field values are equivariant under rigid motion")
{
    const Scene scene = random_scene(60, 8, 0, 1.0, -2.5, -1.0);
    std::mt19937_64 rng(77);
    const Mat3 R = quat_to_rotation(random_quat(rng));
    const Vec3 t(0.4, -2.0, 1.3);
    Scene moved = scene;
    const Eigen::Quaterniond qr(R);
    for (auto& g : moved.gaussians) {
        g.mean = R * g.mean + t;
        const Eigen::Quaterniond qg(g.rot[0], g.rot[1], g.rot[2], g.rot[3]);
        const Eigen::Quaterniond q = qr * qg;
        g.rot = Vec4(q.w(), q.x(), q.y(), q.z());
    }
    const NeighborIndex i0 = rebuild_index(scene), i1 = rebuild_index(moved);
    const DensityField f0(scene, i0), f1(moved, i1);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p = random_point_near(scene, rng, 0.1);
        const Vec3 q = R * p + t;
        const FieldSample a = f0.sample(p), b = f1.sample(q);
        CHECK(b.d == doctest::Approx(a.d).epsilon(1e-9));
        CHECK(b.f_ideal == doctest::Approx(a.f_ideal).epsilon(1e-7));
        CHECK(b.g_star == a.g_star);
        CHECK((b.grad_d - R * a.grad_d).norm() <= 1e-9 * std::max(1.0, a.grad_d.norm()));
    }
    // single-term lower bound of the exact sum
    const DensityField e0(scene);
    for (int i = 0; i < 50; ++i) {
        const Vec3 p = random_point_near(scene, rng, 0.1);
        const int g = e0.closest_gaussian(p);
        CHECK(e0.density(p) >= e0.term(g).alpha * std::exp(-0.5 * e0.term(g).mahalanobis(p)));
    }
}
