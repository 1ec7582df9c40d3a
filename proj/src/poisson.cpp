#include "gausssurf/poisson_mesh.hpp"

#include "gausssurf/kdtree.hpp"
#include "gausssurf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gausssurf {

void PoissonOptions::validate() const
{
    if (res < 8) throw ValidationError("Poisson grid resolution must be >= 8");
    if (!(screening >= 0)) throw ValidationError("screening must be >= 0");
    if (!(cg_tolerance > 0)) throw ValidationError("cg_tolerance must be > 0");
    if (cg_max_iters <= 0) throw ValidationError("cg_max_iters must be > 0");
    if (!(min_component_fraction >= 0 && min_component_fraction < 1)) {
        throw ValidationError("min_component_fraction must be in [0, 1)");
    }
    if (area_neighbors < 1) throw ValidationError("area_neighbors must be >= 1");
    if (!(margin >= 0)) throw ValidationError("margin must be >= 0");
}

namespace {

// Deterministic parallel sum of fn(i) over [0, n).
template <typename Fn>
double reduce_sum(std::size_t n, Fn&& fn)
{
    std::vector<double> part(kReductionChunks, 0.0);
    parallel_chunks(n, kReductionChunks, [&](std::size_t c, std::size_t b, std::size_t e) {
        double s = 0;
        for (std::size_t i = b; i < e; ++i) s += fn(i);
        part[c] = s;
    });
    double s = 0;
    for (double p : part) s += p;
    return s;
}

struct TrilinearStencil {
    std::size_t node[8];
    double w[8];
    bool inside = false;
};

TrilinearStencil stencil(const ScalarGrid& g, const Vec3& p)
{
    TrilinearStencil s;
    const Vec3 u = (p - g.origin) / g.spacing;
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        if (!(u[a] >= 0 && u[a] <= g.res[a] - 1)) return s;
        i0[a] = std::min(static_cast<int>(u[a]), g.res[a] - 2);
        f[a] = u[a] - i0[a];
    }
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        s.node[c] = g.index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
        s.w[c] = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
    }
    s.inside = true;
    return s;
}

// Matrix-free (L + diag(screen)) on the grid graph.
class GridOperator {
public:
    GridOperator(std::array<int, 3> res, std::vector<double> screen) : res_(res), screen_(std::move(screen))
    {
        diag_.resize(screen_.size());
        for (int k = 0; k < res_[2]; ++k)
            for (int j = 0; j < res_[1]; ++j)
                for (int i = 0; i < res_[0]; ++i) {
                    const std::size_t n = index(i, j, k);
                    const int deg = (i > 0) + (i + 1 < res_[0]) + (j > 0) + (j + 1 < res_[1]) + (k > 0) + (k + 1 < res_[2]);
                    diag_[n] = deg + screen_[n];
                }
    }

    const std::vector<double>& diag() const { return diag_; }

    void apply(const std::vector<double>& x, std::vector<double>& y) const
    {
        const std::size_t sx = 1, sy = static_cast<std::size_t>(res_[0]), sz = sy * res_[1];
        parallel_for(static_cast<std::size_t>(res_[2]), [&](std::size_t kk) {
            const int k = static_cast<int>(kk);
            for (int j = 0; j < res_[1]; ++j)
                for (int i = 0; i < res_[0]; ++i) {
                    const std::size_t n = index(i, j, k);
                    double v = diag_[n] * x[n];
                    if (i > 0) v -= x[n - sx];
                    if (i + 1 < res_[0]) v -= x[n + sx];
                    if (j > 0) v -= x[n - sy];
                    if (j + 1 < res_[1]) v -= x[n + sy];
                    if (k > 0) v -= x[n - sz];
                    if (k + 1 < res_[2]) v -= x[n + sz];
                    y[n] = v;
                }
        });
    }

private:
    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(res_[0]) * (j + static_cast<std::size_t>(res_[1]) * k);
    }

    std::array<int, 3> res_;
    std::vector<double> screen_;
    std::vector<double> diag_;
};

struct CgResult {
    int iterations = 0;
    double residual = 0;   // relative
    bool converged = false;
};

// Jacobi-preconditioned conjugate gradient from x = 0.
CgResult solve_pcg(const GridOperator& op, const std::vector<double>& b, std::vector<double>& x, double tol,
                   int max_iters)
{
    const std::size_t n = b.size();
    const auto& d = op.diag();
    x.assign(n, 0.0);
    std::vector<double> r = b, z(n), p(n), ap(n);
    const double bnorm = std::sqrt(reduce_sum(n, [&](std::size_t i) { return b[i] * b[i]; }));
    CgResult res;
    if (bnorm == 0) {
        res.converged = true;
        return res;
    }
    parallel_for(n, [&](std::size_t i) { p[i] = z[i] = r[i] / d[i]; });
    double rz = reduce_sum(n, [&](std::size_t i) { return r[i] * z[i]; });
    for (int it = 1; it <= max_iters; ++it) {
        op.apply(p, ap);
        const double alpha = rz / reduce_sum(n, [&](std::size_t i) { return p[i] * ap[i]; });
        parallel_for(n, [&](std::size_t i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / d[i];
        });
        res.iterations = it;
        res.residual = std::sqrt(reduce_sum(n, [&](std::size_t i) { return r[i] * r[i]; })) / bnorm;
        if (res.residual <= tol) {
            res.converged = true;
            return res;
        }
        const double rz_next = reduce_sum(n, [&](std::size_t i) { return r[i] * z[i]; });
        const double beta = rz_next / rz;
        rz = rz_next;
        parallel_for(n, [&](std::size_t i) { p[i] = z[i] + beta * p[i]; });
    }
    return res;
}

} // namespace

TriangleMesh poisson_reconstruct(const OrientedPointCloud& cloud, const PoissonOptions& opts, PoissonStats* stats)
{
    opts.validate();
    if (cloud.size() < kMinPoissonPoints) {
        throw ValidationError("Poisson reconstruction needs at least " + std::to_string(kMinPoissonPoints) +
                              " points, got " + std::to_string(cloud.size()));
    }
    if (cloud.normals.size() != cloud.size()) throw ValidationError("point and normal counts differ");
    for (const Vec3& n : cloud.normals) {
        if (!(std::abs(n.norm() - 1.0) < 1e-3)) throw ValidationError("Poisson reconstruction needs unit normals");
    }

    Vec3 lo, hi;
    if (opts.bounds) {
        std::tie(lo, hi) = *opts.bounds;
    } else {
        lo = hi = cloud.points[0];
        for (const Vec3& p : cloud.points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
    }
    const double extent = (hi - lo).maxCoeff();
    if (!(extent > 0)) throw ValidationError("point cloud bounding box is degenerate");
    lo.array() -= opts.margin * extent;
    hi.array() += opts.margin * extent;
    const double h = (hi - lo).maxCoeff() / (opts.res - 1);
    std::array<int, 3> res;
    for (int a = 0; a < 3; ++a) res[a] = std::clamp(static_cast<int>(std::ceil((hi[a] - lo[a]) / h)) + 1, 2, opts.res);
    const Vec3 center = 0.5 * (lo + hi);
    const Vec3 origin = center - 0.5 * h * Vec3(res[0] - 1, res[1] - 1, res[2] - 1);
    ScalarGrid chi(res, origin, h);
    const std::size_t n_nodes = chi.size();

    // per-sample surface area from the distance to the k-th neighbor
    const KdTree tree(cloud.points);
    const int k = opts.area_neighbors;
    std::vector<double> area(cloud.size());
    parallel_for(cloud.size(), [&](std::size_t i) {
        const auto nn = tree.knn(cloud.points[i], k + 1);
        area[i] = M_PI * nn.back().first / std::max<std::size_t>(nn.size() - 1, 1);
    });

    // splat normals (times -area / h^2: chi drops by ~1 across the surface) and sample weights
    std::vector<Vec3> u(n_nodes, Vec3::Zero());
    std::vector<double> weight(n_nodes, 0.0);
    std::vector<TrilinearStencil> stencils(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        stencils[i] = stencil(chi, cloud.points[i]);
        if (!stencils[i].inside) continue;
        const Vec3 g = -cloud.normals[i] * (area[i] / (h * h));
        for (int c = 0; c < 8; ++c) {
            u[stencils[i].node[c]] += stencils[i].w[c] * g;
            weight[stencils[i].node[c]] += stencils[i].w[c];
        }
    }
    std::size_t occupied = 0;
    double weight_sum = 0;
    for (double w : weight) {
        occupied += w > 0;
        weight_sum += w;
    }
    if (occupied == 0) throw ValidationError("no point falls inside the Poisson grid");
    const double mu = opts.screening * static_cast<double>(occupied) / weight_sum;   // screening * h^2 / mean weight
    std::vector<double> screen(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) screen[n] = mu * weight[n];

    // rhs: each grid edge wants chi(head) - chi(tail) = mean of its end-point targets
    std::vector<double> b(n_nodes, 0.0);
    const std::size_t stride[3] = {1, static_cast<std::size_t>(res[0]), static_cast<std::size_t>(res[0]) * res[1]};
    for (int kk = 0; kk < res[2]; ++kk)
        for (int j = 0; j < res[1]; ++j)
            for (int i = 0; i < res[0]; ++i) {
                const std::size_t tail = chi.index(i, j, kk);
                const int idx[3] = {i, j, kk};
                for (int a = 0; a < 3; ++a) {
                    if (idx[a] + 1 >= res[a]) continue;
                    const std::size_t head = tail + stride[a];
                    const double g = 0.5 * (u[tail][a] + u[head][a]);
                    b[head] += g;
                    b[tail] -= g;
                }
            }

    const GridOperator op(res, std::move(screen));
    const CgResult cg = solve_pcg(op, b, chi.values, opts.cg_tolerance, opts.cg_max_iters);
    if (!cg.converged) {
        std::ostringstream msg;
        msg << "Poisson conjugate gradient did not converge in " << cg.iterations << " iterations (relative residual "
            << cg.residual << ")";
        throw ConvergenceError(msg.str());
    }

    double iso = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!stencils[i].inside) continue;
        for (int c = 0; c < 8; ++c) iso += stencils[i].w[c] * chi.values[stencils[i].node[c]];
        ++used;
    }
    iso /= static_cast<double>(used);

    const TriangleMesh raw = marching_cubes(chi, iso);
    TriangleMesh mesh = keep_large_components(raw, opts.min_component_fraction);
    if (stats) {
        stats->res = res;
        stats->spacing = h;
        stats->origin = origin;
        stats->cg_iterations = cg.iterations;
        stats->cg_residual = cg.residual;
        stats->iso = iso;
        stats->faces_before_filter = raw.n_faces();
    }
    return mesh;
}

} // namespace gausssurf
