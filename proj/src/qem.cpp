#include "gausssurf/poisson_mesh.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <queue>

namespace gausssurf {

namespace {

// Boundary edges get a perpendicular constraint plane of this weight times
// the squared edge length, so open borders do not shrink.
constexpr double kBoundaryWeight = 100.0;
constexpr double kSingularTol = 1e-10;

Mat4 plane_quadric(const Vec3& n, const Vec3& p, double w)
{
    const Vec4 q(n.x(), n.y(), n.z(), -n.dot(p));
    return w * q * q.transpose();
}

double quadric_cost(const Mat4& q, const Vec3& x)
{
    const Vec4 h(x.x(), x.y(), x.z(), 1.0);
    return std::max(0.0, h.dot(q * h));
}

struct Candidate {
    double cost;
    int u, v;   // u < v; u survives
    int ver_u, ver_v;
    Vec3 target;
};

struct CandidateOrder {
    bool operator()(const Candidate& a, const Candidate& b) const
    {
        // priority_queue is a max-heap; invert for the minimum cost first
        return std::tie(a.cost, a.u, a.v) > std::tie(b.cost, b.u, b.v);
    }
};

class Decimator {
public:
    Decimator(const TriangleMesh& mesh, DecimateStats& stats) : stats_(stats)
    {
        pos_ = mesh.vertices;
        faces_ = mesh.faces;
        face_alive_.assign(faces_.size(), 1);
        vf_.resize(pos_.size());
        for (std::size_t f = 0; f < faces_.size(); ++f)
            for (int k : faces_[f]) vf_[k].push_back(static_cast<int>(f));
        version_.assign(pos_.size(), 0);
        for (const auto& l : vf_) alive_ += !l.empty();

        quadric_.assign(pos_.size(), Mat4::Zero());
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const Vec3 c = face_cross(static_cast<int>(f));
            const double len = c.norm();
            if (!(len > 0)) continue;
            const Mat4 q = plane_quadric(c / len, pos_[faces_[f][0]], 0.5 * len);
            for (int k : faces_[f]) quadric_[k] += q;
        }
        std::map<std::pair<int, int>, std::vector<int>> edge_faces;
        for (std::size_t f = 0; f < faces_.size(); ++f)
            for (int k = 0; k < 3; ++k) {
                const int a = faces_[f][k], b = faces_[f][(k + 1) % 3];
                edge_faces[std::minmax(a, b)].push_back(static_cast<int>(f));
            }
        for (const auto& [e, fs] : edge_faces) {
            if (fs.size() > 2) ++stats_.nonmanifold_edges;
            if (fs.size() != 1) continue;
            const Vec3 d = pos_[e.second] - pos_[e.first];
            const Vec3 n = d.cross(face_cross(fs[0]));
            if (!(n.norm() > 0)) continue;
            const Mat4 q = plane_quadric(n.normalized(), pos_[e.first], kBoundaryWeight * d.squaredNorm());
            quadric_[e.first] += q;
            quadric_[e.second] += q;
        }
        if (stats_.nonmanifold_edges > 0) {
            spdlog::info("decimate_qem: input has {} non-manifold edges", stats_.nonmanifold_edges);
        }
        for (const auto& [e, fs] : edge_faces) push(e.first, e.second);
    }

    std::size_t alive() const { return alive_; }

    void run(std::size_t target)
    {
        // keep at least a tetrahedron
        target = std::max<std::size_t>(target, 4);
        while (alive_ > target && !heap_.empty()) {
            const Candidate c = heap_.top();
            heap_.pop();
            if (version_[c.u] != c.ver_u || version_[c.v] != c.ver_v || vf_[c.u].empty() || vf_[c.v].empty()) {
                continue;
            }
            if (!link_ok(c.u, c.v)) {
                ++stats_.rejected_link;
                continue;
            }
            if (!geometry_ok(c.u, c.v, c.target)) {
                ++stats_.rejected_flip;
                continue;
            }
            collapse(c);
        }
    }

    TriangleMesh result() const
    {
        TriangleMesh out;
        out.vertices = pos_;
        for (std::size_t f = 0; f < faces_.size(); ++f)
            if (face_alive_[f]) out.faces.push_back(faces_[f]);
        return compact(out);
    }

private:
    Vec3 face_cross(int f) const
    {
        const Face& t = faces_[f];
        return (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
    }

    void push(int a, int b)
    {
        const int u = std::min(a, b), v = std::max(a, b);
        const Mat4 q = quadric_[u] + quadric_[v];
        const Mat3 A = q.topLeftCorner<3, 3>();
        const Vec3 rhs = -q.topRightCorner<3, 1>();
        Vec3 x;
        Eigen::FullPivLU<Mat3> lu(A);
        lu.setThreshold(kSingularTol);
        const Vec3 mid = 0.5 * (pos_[u] + pos_[v]);
        const double edge = (pos_[u] - pos_[v]).norm();
        bool singular = !lu.isInvertible();
        if (!singular) {
            x = lu.solve(rhs);
            // a nearly singular quadric can place the optimum far along a flat direction
            singular = !x.allFinite() || (x - mid).norm() > 2.0 * edge;
        }
        if (singular) {
            x = mid;
            ++stats_.singular_quadrics;
        }
        heap_.push({quadric_cost(q, x), u, v, version_[u], version_[v], x});
    }

    void neighbors(int u, std::vector<int>& out) const
    {
        out.clear();
        for (int f : vf_[u])
            for (int k : faces_[f])
                if (k != u) out.push_back(k);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }

    bool on_boundary(int u) const
    {
        std::map<int, int> count;
        for (int f : vf_[u])
            for (int k : faces_[f])
                if (k != u) ++count[k];
        return std::any_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 1; });
    }

    bool link_ok(int u, int v)
    {
        int shared = 0;
        for (int f : vf_[u]) {
            const Face& t = faces_[f];
            shared += t[0] == v || t[1] == v || t[2] == v;
        }
        if (shared < 1 || shared > 2) return false;
        neighbors(u, nu_);
        neighbors(v, nv_);
        common_.clear();
        std::set_intersection(nu_.begin(), nu_.end(), nv_.begin(), nv_.end(), std::back_inserter(common_));
        if (static_cast<int>(common_.size()) != shared) return false;
        // an interior edge joining two boundary vertices would pinch the surface
        if (shared == 2 && on_boundary(u) && on_boundary(v)) return false;
        return true;
    }

    bool geometry_ok(int u, int v, const Vec3& x) const
    {
        for (int w : {u, v}) {
            for (int f : vf_[w]) {
                const Face& t = faces_[f];
                if ((t[0] == u || t[1] == u || t[2] == u) && (t[0] == v || t[1] == v || t[2] == v)) continue;
                const Vec3 before = face_cross(f);
                Vec3 p[3];
                for (int k = 0; k < 3; ++k) p[k] = t[k] == w ? x : pos_[t[k]];
                const Vec3 after = (p[1] - p[0]).cross(p[2] - p[0]);
                if (!(after.dot(before) > 0)) return false;
            }
        }
        return true;
    }

    void collapse(const Candidate& c)
    {
        const int u = c.u, v = c.v;
        pos_[u] = c.target;
        quadric_[u] += quadric_[v];
        for (int f : vf_[v]) {
            Face& t = faces_[f];
            const bool has_u = t[0] == u || t[1] == u || t[2] == u;
            if (has_u) {
                face_alive_[f] = 0;
                for (int k : t)
                    if (k != u && k != v) std::erase(vf_[k], f);
            } else {
                for (int& k : t)
                    if (k == v) k = u;
                vf_[u].push_back(f);
            }
        }
        std::erase_if(vf_[u], [&](int f) { return !face_alive_[f]; });
        std::sort(vf_[u].begin(), vf_[u].end());
        vf_[v].clear();
        ++version_[u];
        ++version_[v];
        --alive_;
        ++stats_.collapses;
        stats_.costs.push_back(c.cost);
        neighbors(u, nu_);
        for (int w : nu_) push(u, w);
    }

    DecimateStats& stats_;
    std::vector<Vec3> pos_;
    std::vector<Face> faces_;
    std::vector<char> face_alive_;
    std::vector<std::vector<int>> vf_;
    std::vector<int> version_;
    std::vector<Mat4> quadric_;
    std::size_t alive_ = 0;
    std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> heap_;
    std::vector<int> nu_, nv_, common_;
};

} // namespace

TriangleMesh decimate_qem(const TriangleMesh& mesh, std::size_t target_vertices, DecimateStats* stats)
{
    mesh.validate();
    DecimateStats local;
    DecimateStats& st = stats ? *stats : local;
    st = DecimateStats{};
    Decimator dec(mesh, st);
    if (target_vertices >= dec.alive()) {
        if (target_vertices > dec.alive()) {
            spdlog::warn("decimate_qem: target {} exceeds the {} vertices in use; mesh left unchanged",
                         target_vertices, dec.alive());
        }
        return mesh;
    }
    dec.run(target_vertices);
    TriangleMesh out = dec.result();
    if (!mesh.vertex_normals.empty()) compute_vertex_normals(out);
    return out;
}

} // namespace gausssurf
