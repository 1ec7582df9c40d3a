#include "test_util.hpp"

#include "gausssurf/mesh.hpp"

#include <fstream>

using namespace gausssurf;
using namespace testutil;

namespace {

TriangleMesh two_triangles()
{
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

} // namespace

TEST_CASE("icosphere")
{
    for (int s = 0; s <= 4; ++s) {
        const TriangleMesh m = icosphere(s, 2.0, Vec3(1, 0, 0));
        CHECK(m.n_vertices() == 10 * (1u << (2 * s)) + 2);
        const MeshTopology t = analyze_topology(m);
        CHECK(t.euler() == 2);
        CHECK(t.boundary_edges == 0);
        CHECK(t.components == 1);
        for (const Vec3& v : m.vertices) CHECK(std::abs((v - Vec3(1, 0, 0)).norm() - 2.0) < 1e-12);
        for (std::size_t f = 0; f < m.n_faces(); ++f) {
            // outward winding
            const Vec3 c = (m.vertices[m.faces[f][0]] + m.vertices[m.faces[f][1]] + m.vertices[m.faces[f][2]]) / 3.0;
            CHECK(m.face_cross(f).dot(c - Vec3(1, 0, 0)) > 0);
        }
    }
    const TriangleMesh fine = icosphere(5);
    CHECK(signed_volume(fine) == doctest::Approx(4.0 / 3.0 * M_PI).epsilon(2e-3));
    CHECK(surface_area(fine) == doctest::Approx(4.0 * M_PI).epsilon(2e-3));
    CHECK_THROWS_AS(icosphere(-1), ValidationError);
}

TEST_CASE("topology counts")
{
    TriangleMesh one;
    one.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    one.faces = {{0, 1, 2}};
    MeshTopology t = analyze_topology(one);
    CHECK(t.euler() == 1);
    CHECK(t.boundary_edges == 3);

    // three faces on one edge
    TriangleMesh fan;
    fan.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
    fan.faces = {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}};
    t = analyze_topology(fan);
    CHECK(t.nonmanifold_edges == 1);
    CHECK(t.components == 1);

    TriangleMesh two = merge_meshes(icosphere(1), icosphere(0, 1.0, Vec3(5, 0, 0)));
    int n = 0;
    const auto label = face_components(two, &n);
    CHECK(n == 2);
    CHECK(label.front() == 0);
    CHECK(label.back() == 1);
    t = analyze_topology(two);
    CHECK(t.euler() == 4);

    // icosphere(1) has 80 faces, icosphere(0) 20
    CHECK(keep_large_components(two, 0.5).n_faces() == 80);
    CHECK(keep_large_components(two, 0.1).n_faces() == 100);
    CHECK(keep_large_components(two, 0.1).n_vertices() == two.n_vertices());
}

TEST_CASE("cleanup and orientation")
{
    TriangleMesh m = two_triangles();
    m.vertices.push_back({9, 9, 9});   // unreferenced
    m.faces.push_back({0, 0, 1});       // repeated index
    m.vertices.push_back({2, 0, 0});
    m.faces.push_back({0, 1, 5});       // zero area (collinear)
    const TriangleMesh c = remove_degenerate(m);
    CHECK(c.n_faces() == 2);
    CHECK(c.n_vertices() == 4);

    TriangleMesh s = icosphere(2);
    compute_vertex_normals(s);
    for (std::size_t i = 0; i < s.n_vertices(); ++i) CHECK(s.vertex_normals[i].dot(s.vertices[i]) > 0.99);
    const double vol = signed_volume(s);
    flip_orientation(s);
    CHECK(signed_volume(s) == doctest::Approx(-vol));
    CHECK(s.vertex_normals[0].dot(s.vertices[0]) < 0);

    TriangleMesh bad = two_triangles();
    bad.faces[1][2] = 7;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("mesh I/O round trips")
{
    const auto dir = temp_dir("mesh_io");
    TriangleMesh m = icosphere(2, 1.5);
    compute_vertex_normals(m);
    for (const char* name : {"m.obj", "m.ply", "M.PLY"}) {
        CAPTURE(name);
        const std::string path = (dir / name).string();
        save_mesh(m, path);
        const TriangleMesh back = load_mesh(path);
        REQUIRE(back.n_vertices() == m.n_vertices());
        REQUIRE(back.faces == m.faces);
        REQUIRE(back.vertex_normals.size() == m.n_vertices());
        for (std::size_t i = 0; i < m.n_vertices(); ++i) {
            CHECK((back.vertices[i] - m.vertices[i]).norm() < 1e-6);
            CHECK((back.vertex_normals[i] - m.vertex_normals[i]).norm() < 1e-6);
        }
    }
    const TriangleMesh plain = two_triangles();
    save_mesh(plain, (dir / "plain.ply").string());
    CHECK(load_mesh((dir / "plain.ply").string()).vertex_normals.empty());

    // polygons, slash forms and negative indices
    std::ofstream(dir / "quad.obj") << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\n"
                                       "f 1/1 2/1 3/1 4/1\nf -4//1 -2 -1\n";
    const TriangleMesh q = load_obj((dir / "quad.obj").string());
    REQUIRE(q.n_faces() == 3);
    CHECK(q.faces[0] == Face{0, 1, 2});
    CHECK(q.faces[1] == Face{0, 2, 3});
    CHECK(q.faces[2] == Face{0, 2, 3});

    std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nf 1 2 3\n";
    CHECK_THROWS_AS(load_obj((dir / "bad.obj").string()), FormatError);
    std::ofstream(dir / "short.obj") << "v 0 0\n";
    CHECK_THROWS_AS(load_obj((dir / "short.obj").string()), FormatError);
    CHECK_THROWS_AS(load_mesh((dir / "m.stl").string()), ValidationError);
    CHECK_THROWS_AS(load_mesh((dir / "missing.obj").string()), IoError);

    // truncated PLY
    const std::string full = (dir / "m.ply").string();
    std::ifstream in(full, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir / "cut.ply", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS(load_mesh_ply((dir / "cut.ply").string()), FormatError);
}

TEST_CASE("closest point queries against brute force")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 300; ++trial) {
        const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
        const Vec3 p = 2.0 * Vec3(u(rng), u(rng), u(rng));
        const Vec3 q = closest_point_on_triangle(p, a, b, c);
        // oracle: dense barycentric sampling
        double best = 1e300;
        const int n = 200;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j) {
                const Vec3 s = a + (b - a) * (double(i) / n) + (c - a) * (double(j) / n);
                best = std::min(best, (s - p).norm());
            }
        CHECK((q - p).norm() <= best + 1e-12);
        CHECK((q - p).norm() > best - 0.02);
    }

    TriangleMesh m = icosphere(3);
    for (auto& v : m.vertices) v *= 1.0 + 0.1 * u(rng);
    const TriangleTree tree(m);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p = 1.5 * Vec3(u(rng), u(rng), u(rng));
        double brute = 1e300;
        for (const Face& f : m.faces) {
            brute = std::min(brute,
                             (closest_point_on_triangle(p, m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]) - p)
                                 .squaredNorm());
        }
        CHECK(tree.closest(p).dist2 == doctest::Approx(brute).epsilon(1e-12));
    }
    CHECK_THROWS_AS(TriangleTree(TriangleMesh{}).closest(Vec3::Zero()), ValidationError);
}

TEST_CASE("sample_surface is area uniform")
{
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {10, 0, 0}, {13, 0, 0}, {10, 2, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};   // areas 0.5 and 3
    std::mt19937_64 rng(2);
    const auto pts = sample_surface(m, 20000, rng);
    std::size_t small = 0;
    for (const Vec3& p : pts) {
        CHECK(p.z() == 0.0);
        small += p.x() < 5;
    }
    CHECK(std::abs(small / 20000.0 - 0.5 / 3.5) < 0.01);
    CHECK_THROWS_AS(sample_surface(TriangleMesh{}, 10, rng), ValidationError);
}
