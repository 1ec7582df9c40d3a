#include "gausssurf/poisson_mesh.hpp"

#include "gausssurf/parallel.hpp"
#include "mc_tables.hpp"

#include <algorithm>

namespace gausssurf {

ScalarGrid::ScalarGrid(std::array<int, 3> r, const Vec3& o, double h, double fill)
    : res(r), origin(o), spacing(h)
{
    if (r[0] < 2 || r[1] < 2 || r[2] < 2) throw ValidationError("grid resolution must be >= 2 per axis");
    values.assign(static_cast<std::size_t>(r[0]) * r[1] * r[2], fill);
}

void ScalarGrid::validate() const
{
    if (res[0] < 2 || res[1] < 2 || res[2] < 2) throw ValidationError("grid resolution must be >= 2 per axis");
    if (!(spacing > 0)) throw ValidationError("grid spacing must be > 0");
    if (values.size() != static_cast<std::size_t>(res[0]) * res[1] * res[2]) {
        throw ValidationError("grid value count does not match its resolution");
    }
}

double ScalarGrid::interpolate(const Vec3& p) const
{
    const Vec3 u = (p - origin) / spacing;
    int i0[3];
    double w[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::clamp(u[a], 0.0, static_cast<double>(res[a] - 1));
        i0[a] = std::min(static_cast<int>(c), res[a] - 2);
        w[a] = c - i0[a];
    }
    double v = 0;
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const double wt = (dx ? w[0] : 1 - w[0]) * (dy ? w[1] : 1 - w[1]) * (dz ? w[2] : 1 - w[2]);
        v += wt * at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
    }
    return v;
}

ScalarGrid ScalarGrid::sample(const std::function<double(const Vec3&)>& fn, std::array<int, 3> res,
                              const Vec3& origin, double spacing)
{
    ScalarGrid g(res, origin, spacing);
    g.validate();
    parallel_for(static_cast<std::size_t>(res[2]), [&](std::size_t k) {
        for (int j = 0; j < res[1]; ++j)
            for (int i = 0; i < res[0]; ++i) g.values[g.index(i, j, static_cast<int>(k))] = fn(g.position(i, j, static_cast<int>(k)));
    });
    return g;
}

namespace {

constexpr double kMinEdgeT = 1e-7;

// Cell edge -> (corner offset, axis) of the grid edge it lies on.
constexpr int kEdgeNode[12][4] = {{0, 0, 0, 0}, {1, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 0, 1},
                                  {0, 0, 1, 0}, {1, 0, 1, 1}, {0, 1, 1, 0}, {0, 0, 1, 1},
                                  {0, 0, 0, 2}, {1, 0, 0, 2}, {1, 1, 0, 2}, {0, 1, 0, 2}};
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

} // namespace

TriangleMesh marching_cubes(const ScalarGrid& g, double iso)
{
    g.validate();
    for (double v : g.values) {
        if (!std::isfinite(v)) throw ValidationError("marching cubes needs finite field values");
    }
    const int nx = g.res[0], ny = g.res[1], nz = g.res[2];
    TriangleMesh mesh;

    // one vertex per crossed grid edge, numbered axis by axis in node order
    std::vector<int> edge_vertex[3];
    for (int a = 0; a < 3; ++a) {
        edge_vertex[a].assign(g.size(), -1);
        const int ex = nx - (a == 0), ey = ny - (a == 1), ez = nz - (a == 2);
        for (int k = 0; k < ez; ++k)
            for (int j = 0; j < ey; ++j)
                for (int i = 0; i < ex; ++i) {
                    const double v0 = g.at(i, j, k);
                    const double v1 = g.at(i + (a == 0), j + (a == 1), k + (a == 2));
                    if ((v0 < iso) == (v1 < iso)) continue;
                    // a node exactly at the iso value would weld several edge vertices into one point
                    const double t = std::clamp((iso - v0) / (v1 - v0), kMinEdgeT, 1.0 - kMinEdgeT);
                    Vec3 p = g.position(i, j, k);
                    p[a] += t * g.spacing;
                    edge_vertex[a][g.index(i, j, k)] = static_cast<int>(mesh.vertices.size());
                    mesh.vertices.push_back(p);
                }
    }

    std::vector<std::vector<Face>> slices(static_cast<std::size_t>(nz - 1));
    parallel_for(slices.size(), [&](std::size_t ks) {
        const int k = static_cast<int>(ks);
        auto& out = slices[ks];
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i + 1 < nx; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    if (g.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]) < iso) cube |= 1 << c;
                }
                if (mc::kEdgeTable[cube] == 0) continue;
                auto vid = [&](int e) {
                    const int* n = kEdgeNode[e];
                    return edge_vertex[n[3]][g.index(i + n[0], j + n[1], k + n[2])];
                };
                const int* tri = mc::kTriTable[cube];
                for (int m = 0; tri[m] != -1; m += 3) out.push_back({vid(tri[m]), vid(tri[m + 1]), vid(tri[m + 2])});
            }
    });
    for (auto& s : slices) mesh.faces.insert(mesh.faces.end(), s.begin(), s.end());
    return remove_degenerate(mesh, 0.0);
}

TriangleMesh marching_cubes(const std::function<double(const Vec3&)>& field, std::array<int, 3> res,
                            const Vec3& origin, double spacing, double iso)
{
    return marching_cubes(ScalarGrid::sample(field, res, origin, spacing), iso);
}

} // namespace gausssurf
