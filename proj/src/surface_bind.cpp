#include "gausssurf/surface_bind.hpp"

#include "gausssurf/kdtree.hpp"
#include "gausssurf/parallel.hpp"
#include "gausssurf/regularizer.hpp"
#include "gausssurf/scene_io.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace gausssurf {

namespace {

constexpr double kMinTriangleArea = 1e-12;
constexpr double kZeroRot = 1e-12;
constexpr double kInitOpacity = 0.98;

// Everything the forward map and its derivative need about one triangle.
struct TriGeom {
    Vec3 v[3];
    Vec3 cross, n;
    double cross_norm = 0;
    Vec3 u;   // v1 - v0
    double u_norm = 0;
    Vec3 e1, e2;
    double side_sum = 0;

    TriGeom(const TriangleMesh& mesh, int tri_id)
    {
        if (tri_id < 0 || static_cast<std::size_t>(tri_id) >= mesh.n_faces()) {
            throw ValidationError("triangle id " + std::to_string(tri_id) + " out of range");
        }
        const Face& f = mesh.faces[tri_id];
        for (int k = 0; k < 3; ++k) v[k] = mesh.vertices[f[k]];
        u = v[1] - v[0];
        cross = u.cross(v[2] - v[0]);
        cross_norm = cross.norm();
        if (!(0.5 * cross_norm > kMinTriangleArea)) {
            throw ValidationError("triangle " + std::to_string(tri_id) + " is degenerate (area " +
                                  std::to_string(0.5 * cross_norm) + ")");
        }
        n = cross / cross_norm;
        u_norm = u.norm();
        e1 = (u - u.dot(n) * n).normalized();
        e2 = n.cross(e1);
        side_sum = (v[1] - v[0]).norm() + (v[2] - v[1]).norm() + (v[0] - v[2]).norm();
    }

    Mat3 frame() const
    {
        Mat3 r;
        r << n, e1, e2;
        return r;
    }
    double thin_scale() const { return kThinScaleRatio * side_sum / 3.0; }
};

// Unit (x', y') and the modulus; zero modulus means the guard kicked in.
Vec2 unit_rot(const Vec2& rot2, double* modulus, std::atomic<long>* warnings)
{
    if (std::abs(rot2.x()) < kZeroRot && std::abs(rot2.y()) < kZeroRot) {
        if (warnings) ++*warnings;
        *modulus = 0;
        return Vec2(1, 0);
    }
    *modulus = rot2.norm();
    return rot2 / *modulus;
}

Mat3 rotate_frame(const TriGeom& t, const Vec2& q)
{
    Mat3 r;
    r << t.n, q.x() * t.e1 + q.y() * t.e2, -q.y() * t.e1 + q.x() * t.e2;
    return r;
}

double mean_side(const TriangleMesh& mesh, std::size_t f)
{
    const Face& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3& b = mesh.vertices[face[1]];
    const Vec3& c = mesh.vertices[face[2]];
    return ((b - a).norm() + (c - b).norm() + (a - c).norm()) / 3.0;
}

} // namespace

void BoundScene::validate() const
{
    mesh.validate();
    if (n_per_triangle <= 0) throw ValidationError("n_per_triangle must be positive");
    if (bound.size() != mesh.n_faces() * static_cast<std::size_t>(n_per_triangle)) {
        throw ValidationError("bound scene holds " + std::to_string(bound.size()) + " Gaussians for " +
                              std::to_string(mesh.n_faces()) + " faces x " + std::to_string(n_per_triangle));
    }
    const std::size_t n_sh = static_cast<std::size_t>(sh_count(sh_degree));
    for (std::size_t i = 0; i < bound.size(); ++i) {
        const BoundGaussian& b = bound[i];
        const std::string where = "bound Gaussian " + std::to_string(i);
        if (b.tri_id != static_cast<int>(i / n_per_triangle)) throw ValidationError(where + " has the wrong triangle");
        if ((b.bary.array() < 0).any() || std::abs(b.bary.sum() - 1) > 1e-9) {
            throw ValidationError(where + " has invalid barycentric coordinates");
        }
        if (b.bary != bound[i % n_per_triangle].bary) {
            throw ValidationError(where + " breaks the shared barycentric layout");
        }
        if (b.sh.size() != n_sh) throw ValidationError(where + " has the wrong number of SH coefficients");
    }
}

std::vector<Vec3> bary_layout(int n)
{
    const double a = 2.0 / 3.0, b = 1.0 / 6.0;
    switch (n) {
    case 1: return {Vec3::Constant(1.0 / 3.0)};
    case 3: return {Vec3(a, b, b), Vec3(b, a, b), Vec3(b, b, a)};
    case 6: {
        // the vertex-biased points plus their edge-biased complements (1 - p) / 2
        std::vector<Vec3> out = bary_layout(3);
        for (int k = 0; k < 3; ++k) out.push_back((Vec3::Ones() - out[k]) / 2.0);
        return out;
    }
    default:
        throw ValidationError("unsupported Gaussians per triangle: " + std::to_string(n) + " (supported: 1, 3, 6)");
    }
}

int default_n_per_triangle(std::size_t n_vertices) { return n_vertices <= 200000 ? 6 : 1; }

Mat3 triangle_frame(const TriangleMesh& mesh, int tri_id) { return TriGeom(mesh, tri_id).frame(); }

Mat3 bound_rotation(const BoundGaussian& bg, const TriangleMesh& mesh, std::atomic<long>* zero_rot_warnings)
{
    const TriGeom t(mesh, bg.tri_id);
    double r = 0;
    return rotate_frame(t, unit_rot(bg.rot2, &r, zero_rot_warnings));
}

Gaussian3D bound_to_world(const BoundGaussian& bg, const TriangleMesh& mesh, std::atomic<long>* zero_rot_warnings)
{
    const TriGeom t(mesh, bg.tri_id);
    double r = 0;
    const Mat3 rg = rotate_frame(t, unit_rot(bg.rot2, &r, zero_rot_warnings));
    Gaussian3D g;
    g.mean = bg.bary[0] * t.v[0] + bg.bary[1] * t.v[1] + bg.bary[2] * t.v[2];
    g.log_scale = Vec3(std::log(t.thin_scale()), bg.log_scale2[0], bg.log_scale2[1]);
    g.rot = rotation_to_quat(rg);
    g.opacity_logit = bg.opacity_logit;
    g.sh = bg.sh;
    return g;
}

Scene bound_scene_to_world(const BoundScene& bs, std::atomic<long>* zero_rot_warnings)
{
    Scene scene;
    scene.sh_degree = bs.sh_degree;
    scene.gaussians.resize(bs.size());
    parallel_for(bs.size(), [&](std::size_t i) {
        scene.gaussians[i] = bound_to_world(bs.bound[i], bs.mesh, zero_rot_warnings);
    });
    return scene;
}

BoundScene bind_gaussians(const TriangleMesh& mesh, int n_per_triangle, const Scene* init_scene)
{
    mesh.validate();
    if (mesh.empty()) throw ValidationError("cannot bind Gaussians to an empty mesh");
    const std::vector<Vec3> layout = bary_layout(n_per_triangle);

    BoundScene bs;
    bs.mesh = mesh;
    bs.n_per_triangle = n_per_triangle;
    KdTree tree;
    if (init_scene && !init_scene->empty()) {
        bs.sh_degree = init_scene->sh_degree;
        std::vector<Vec3> means;
        means.reserve(init_scene->size());
        for (const auto& g : init_scene->gaussians) means.push_back(g.mean);
        tree = KdTree(std::move(means));
    }
    const std::size_t n_sh = static_cast<std::size_t>(sh_count(bs.sh_degree));

    bs.bound.resize(mesh.n_faces() * layout.size());
    parallel_for(mesh.n_faces(), [&](std::size_t f) {
        const TriGeom t(mesh, static_cast<int>(f));
        std::vector<Vec3> pts;
        for (const Vec3& b : layout) pts.push_back(b[0] * t.v[0] + b[1] * t.v[1] + b[2] * t.v[2]);
        double dsum = 0;
        int dcount = 0;
        if (pts.size() == 1) {
            // a lone centroid: spacing measured to the corners instead
            for (const Vec3& c : t.v) dsum += (c - pts[0]).norm();
            dcount = 3;
        } else {
            for (std::size_t a = 0; a < pts.size(); ++a)
                for (std::size_t b = a + 1; b < pts.size(); ++b) {
                    dsum += (pts[a] - pts[b]).norm();
                    ++dcount;
                }
        }
        const double log_s = std::log(0.5 * dsum / dcount);
        for (std::size_t k = 0; k < layout.size(); ++k) {
            BoundGaussian& bg = bs.bound[f * layout.size() + k];
            bg.tri_id = static_cast<int>(f);
            bg.bary = layout[k];
            bg.log_scale2 = Vec2::Constant(log_s);
            bg.rot2 = Vec2(1, 0);
            bg.opacity_logit = logit(kInitOpacity);
            if (tree.size() > 0) {
                bg.sh = init_scene->gaussians[tree.nearest(pts[k]).first].sh;
                bg.sh.resize(n_sh, Vec3::Zero());
            } else {
                bg.sh.assign(n_sh, Vec3::Zero());
            }
        }
    });
    return bs;
}

BoundGrads::BoundGrads(const BoundScene& bs)
    : vertices(bs.mesh.n_vertices(), Vec3::Zero()),
      log_scale2(bs.size(), Vec2::Zero()),
      rot2(bs.size(), Vec2::Zero()),
      opacity_logit(bs.size(), 0.0),
      sh(bs.size())
{
    for (std::size_t i = 0; i < bs.size(); ++i) sh[i].assign(bs.bound[i].sh.size(), Vec3::Zero());
}

bool BoundGrads::all_finite() const
{
    auto ok = [](const auto& v) { return v.allFinite(); };
    return std::all_of(vertices.begin(), vertices.end(), ok) && std::all_of(log_scale2.begin(), log_scale2.end(), ok) &&
           std::all_of(rot2.begin(), rot2.end(), ok) &&
           std::all_of(opacity_logit.begin(), opacity_logit.end(), [](double x) { return std::isfinite(x); }) &&
           std::all_of(sh.begin(), sh.end(), [&](const auto& s) { return std::all_of(s.begin(), s.end(), ok); });
}

void chain_world_grads(const BoundScene& bs, const SceneGrads& world, BoundGrads& out)
{
    if (world.size() != bs.size() || world.cov.size() != bs.size()) {
        throw ValidationError("world gradients do not match the bound scene");
    }
    // per-Gaussian corner contributions, summed afterwards in Gaussian order
    std::vector<std::array<Vec3, 3>> corner(bs.size());
    parallel_for(bs.size(), [&](std::size_t i) {
        const BoundGaussian& bg = bs.bound[i];
        const TriGeom t(bs.mesh, bg.tri_id);
        double r = 0;
        const Vec2 q = unit_rot(bg.rot2, &r, nullptr);
        const Mat3 rg = rotate_frame(t, q);
        const Vec3 s(t.thin_scale(), std::exp(bg.log_scale2[0]), std::exp(bg.log_scale2[1]));

        std::array<Vec3, 3> dv;
        for (int k = 0; k < 3; ++k) dv[k] = bg.bary[k] * world.mean[i];

        const Mat3 gcov = 0.5 * (world.cov[i] + world.cov[i].transpose());
        const Mat3 dm = 2.0 * gcov * rg * s.asDiagonal();
        Mat3 drg;
        Vec3 dlog_s;
        for (int k = 0; k < 3; ++k) {
            dlog_s[k] = dm.col(k).dot(rg.col(k)) * s[k];
            drg.col(k) = dm.col(k) * s[k];
        }
        out.log_scale2[i] += dlog_s.tail<2>();

        // thin scale = ratio * (sum of side lengths) / 3
        const double dside = dlog_s[0] / t.side_sum;
        for (int k = 0; k < 3; ++k) {
            const int k1 = (k + 1) % 3;
            const Vec3 dir = (t.v[k1] - t.v[k]).normalized();
            dv[k1] += dside * dir;
            dv[k] -= dside * dir;
        }

        const Vec3 g0 = drg.col(0), g1 = drg.col(1), g2 = drg.col(2);
        const Vec2 gq(g1.dot(t.e1) + g2.dot(t.e2), g1.dot(t.e2) - g2.dot(t.e1));
        if (r > 0) out.rot2[i] += (gq - q * q.dot(gq)) / r;

        Vec3 ge1 = q.x() * g1 - q.y() * g2;
        const Vec3 ge2 = q.y() * g1 + q.x() * g2;
        Vec3 gn = g0 + t.e1.cross(ge2);
        ge1 += ge2.cross(t.n);
        const Vec3 gu = (ge1 - t.e1 * t.e1.dot(ge1)) / t.u_norm;
        const Vec3 gc = (gn - t.n * t.n.dot(gn)) / t.cross_norm;
        const Vec3 a = t.u, b = t.v[2] - t.v[0];
        const Vec3 ga = b.cross(gc) + gu;
        const Vec3 gb = gc.cross(a);
        dv[1] += ga;
        dv[2] += gb;
        dv[0] -= ga + gb;
        corner[i] = dv;

        out.opacity_logit[i] += world.opacity_logit[i];
        for (std::size_t k = 0; k < out.sh[i].size() && k < world.sh[i].size(); ++k) out.sh[i][k] += world.sh[i][k];
    });
    for (std::size_t i = 0; i < bs.size(); ++i) {
        const Face& f = bs.mesh.faces[bs.bound[i].tri_id];
        for (int k = 0; k < 3; ++k) out.vertices[f[k]] += corner[i][k];
    }
}

double normal_consistency_loss(const TriangleMesh& mesh, std::vector<Vec3>* vertex_grads, double weight)
{
    struct EdgeFace {
        int a, b, face;
        bool operator<(const EdgeFace& o) const { return std::tie(a, b, face) < std::tie(o.a, o.b, o.face); }
    };
    std::vector<EdgeFace> ef;
    ef.reserve(3 * mesh.n_faces());
    for (std::size_t f = 0; f < mesh.n_faces(); ++f)
        for (int k = 0; k < 3; ++k) {
            const int a = mesh.faces[f][k], b = mesh.faces[f][(k + 1) % 3];
            ef.push_back({std::min(a, b), std::max(a, b), static_cast<int>(f)});
        }
    std::sort(ef.begin(), ef.end());
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < ef.size();) {
        std::size_t j = i;
        while (j < ef.size() && ef[j].a == ef[i].a && ef[j].b == ef[i].b) ++j;
        if (j - i == 2) pairs.emplace_back(ef[i].face, ef[i + 1].face);
        i = j;
    }
    if (pairs.empty()) return 0.0;

    std::vector<Vec3> cross(mesh.n_faces()), normal(mesh.n_faces());
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
        cross[f] = mesh.face_cross(f);
        const double len = cross[f].norm();
        normal[f] = len > 0 ? Vec3(cross[f] / len) : Vec3::Zero();
    }
    const double inv = 1.0 / static_cast<double>(pairs.size());
    double loss = 0;
    std::vector<Vec3> gn(vertex_grads ? mesh.n_faces() : 0, Vec3::Zero());
    for (const auto& [fa, fb] : pairs) {
        loss += 1.0 - normal[fa].dot(normal[fb]);
        if (vertex_grads) {
            gn[fa] -= weight * inv * normal[fb];
            gn[fb] -= weight * inv * normal[fa];
        }
    }
    if (vertex_grads) {
        if (vertex_grads->size() != mesh.n_vertices()) throw ValidationError("vertex gradient buffer has the wrong size");
        for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
            const double len = cross[f].norm();
            if (len == 0) continue;
            const Vec3 gc = (gn[f] - normal[f] * normal[f].dot(gn[f])) / len;
            const Face& face = mesh.faces[f];
            const Vec3 a = mesh.vertices[face[1]] - mesh.vertices[face[0]];
            const Vec3 b = mesh.vertices[face[2]] - mesh.vertices[face[0]];
            const Vec3 ga = b.cross(gc), gb = gc.cross(a);
            (*vertex_grads)[face[1]] += ga;
            (*vertex_grads)[face[2]] += gb;
            (*vertex_grads)[face[0]] -= ga + gb;
        }
    }
    return loss * inv;
}

void RefineConfig::validate() const
{
    if (iters < 0) throw ValidationError("refinement iterations must be >= 0");
    if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be >= 0");
    for (double lr : {lr_vertex, lr_scale, lr_rotation, lr_opacity, lr_sh_dc, lr_sh_rest}) {
        if (!(lr >= 0)) throw ValidationError("learning rates must be >= 0");
    }
    if (!(ssim_lambda >= 0 && ssim_lambda <= 1)) throw ValidationError("ssim_lambda must be in [0, 1]");
}

void RefineLog::write_csv(std::ostream& out) const
{
    out << "iter,photometric,normal,total\n";
    for (const auto& r : rows) out << r.iter << ',' << r.photometric << ',' << r.normal << ',' << r.total << '\n';
}

namespace {

// Adam over every refined parameter packed into one flat vector.
class FlatAdam {
public:
    FlatAdam(std::vector<double> lr) : lr_(std::move(lr)), m_(lr_.size(), 0.0), v_(lr_.size(), 0.0) {}

    void step(std::vector<double>& p, const std::vector<double>& g)
    {
        ++t_;
        const double c1 = 1 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[i] = beta1 * m_[i] + (1 - beta1) * g[i];
            v_[i] = beta2 * v_[i] + (1 - beta2) * g[i] * g[i];
            p[i] -= lr_[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
    }

    double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;

private:
    std::vector<double> lr_, m_, v_;
    long long t_ = 0;
};

template <typename Visit>
void visit_params(BoundScene& bs, Visit&& visit)
{
    for (Vec3& v : bs.mesh.vertices)
        for (int k = 0; k < 3; ++k) visit(v[k], 0, 0);
    for (BoundGaussian& b : bs.bound) {
        for (int k = 0; k < 2; ++k) visit(b.log_scale2[k], 1, 0);
        for (int k = 0; k < 2; ++k) visit(b.rot2[k], 2, 0);
        visit(b.opacity_logit, 3, 0);
        for (std::size_t c = 0; c < b.sh.size(); ++c)
            for (int k = 0; k < 3; ++k) visit(b.sh[c][k], 4, static_cast<int>(c));
    }
}

std::vector<double> pack_grads(const BoundGrads& g)
{
    std::vector<double> out;
    for (const Vec3& v : g.vertices) out.insert(out.end(), v.data(), v.data() + 3);
    for (std::size_t i = 0; i < g.log_scale2.size(); ++i) {
        out.insert(out.end(), g.log_scale2[i].data(), g.log_scale2[i].data() + 2);
        out.insert(out.end(), g.rot2[i].data(), g.rot2[i].data() + 2);
        out.push_back(g.opacity_logit[i]);
        for (const Vec3& s : g.sh[i]) out.insert(out.end(), s.data(), s.data() + 3);
    }
    return out;
}

} // namespace

BoundScene refine(const BoundScene& input, std::span<const Image> images, std::span<const Camera> cams,
                  const RefineConfig& cfg, RefineLog* log)
{
    cfg.validate();
    if (images.size() != cams.size()) {
        throw ValidationError("got " + std::to_string(images.size()) + " images for " + std::to_string(cams.size()) +
                              " cameras");
    }
    BoundScene bs = input;
    if (cfg.iters == 0) return bs;
    bs.validate();
    if (cams.empty()) throw ValidationError("refinement needs at least one camera");
    for (std::size_t i = 0; i < cams.size(); ++i) {
        if (images[i].width != cams[i].width || images[i].height != cams[i].height) {
            throw ValidationError("image " + std::to_string(i) + " does not match its camera size");
        }
    }

    const double scale = cfg.scene_scale > 0 ? cfg.scene_scale : camera_extent(cams);
    const double group_lr[4] = {cfg.lr_vertex * scale, cfg.lr_scale, cfg.lr_rotation, cfg.lr_opacity};
    std::vector<double> lr, params;
    visit_params(bs, [&](double& p, int group, int sh_index) {
        params.push_back(p);
        lr.push_back(group < 4 ? group_lr[group] : (sh_index == 0 ? cfg.lr_sh_dc : cfg.lr_sh_rest));
    });
    FlatAdam adam(std::move(lr));

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_cam(0, cams.size() - 1);
    std::atomic<long> warnings{0};
    for (int it = 0; it < cfg.iters; ++it) {
        const std::size_t ci = pick_cam(rng);
        const Scene world = bound_scene_to_world(bs, &warnings);
        const ForwardPass fwd = rasterize(world, cams[ci], cfg.render);
        PhotometricLoss photo = photometric_loss(fwd.color, images[ci], cfg.ssim_lambda);
        for (auto& v : photo.grad.data) v *= cfg.photometric_weight;
        const SceneGrads wg = backward_render(fwd, world, cams[ci], photo.grad, cfg.render);

        BoundGrads grads(bs);
        chain_world_grads(bs, wg, grads);
        RefineLogRow row;
        row.iter = it;
        row.photometric = photo.value;
        row.normal = normal_consistency_loss(bs.mesh, &grads.vertices, cfg.normal_weight);
        row.total = cfg.photometric_weight * row.photometric + cfg.normal_weight * row.normal;

        if (!std::isfinite(row.total) || !grads.all_finite()) {
            if (!cfg.snapshot_prefix.empty()) save_bound_scene(bs, cfg.snapshot_prefix);
            std::ostringstream msg;
            msg << "non-finite loss at refinement iteration " << it << ": photometric " << row.photometric
                << ", normal " << row.normal;
            if (!cfg.snapshot_prefix.empty()) msg << "; bound scene snapshot written to " << cfg.snapshot_prefix;
            throw TrainingError(msg.str());
        }

        adam.step(params, pack_grads(grads));
        std::size_t k = 0;
        visit_params(bs, [&](double& p, int, int) { p = params[k++]; });
        for (BoundGaussian& b : bs.bound) {
            const double r = b.rot2.norm();
            if (r > kZeroRot) b.rot2 /= r;
        }
        // keep the optimizer's copy in sync with the renormalized rotations
        k = 0;
        visit_params(bs, [&](double& p, int, int) { params[k++] = p; });

        if (log) log->rows.push_back(row);
        if (cfg.checkpoint_every > 0 && cfg.on_checkpoint && (it + 1) % cfg.checkpoint_every == 0) {
            cfg.on_checkpoint(it + 1, bs);
        }
    }
    if (!bs.mesh.vertex_normals.empty()) compute_vertex_normals(bs.mesh);
    if (warnings > 0) spdlog::warn("{} bound rotations were near zero and treated as identity", warnings.load());
    if (log) log->zero_rot_warnings = warnings;
    return bs;
}

BoundScene edit_rescale(const BoundScene& bs, const TriangleMesh& old_mesh, const TriangleMesh& new_mesh)
{
    if (old_mesh.faces != new_mesh.faces || old_mesh.n_vertices() != new_mesh.n_vertices() ||
        bs.mesh.faces != old_mesh.faces) {
        throw ValidationError("edit_rescale needs meshes with identical topology");
    }
    BoundScene out = bs;
    out.mesh = new_mesh;
    std::vector<double> log_ratio(old_mesh.n_faces());
    for (std::size_t f = 0; f < old_mesh.n_faces(); ++f) {
        const double before = mean_side(old_mesh, f);
        if (!(before > 0)) throw ValidationError("triangle " + std::to_string(f) + " of the original mesh is degenerate");
        log_ratio[f] = std::log(mean_side(new_mesh, f) / before);
    }
    for (BoundGaussian& b : out.bound) b.log_scale2.array() += log_ratio[b.tri_id];
    return out;
}

namespace {

constexpr char kBoundMagic[] = "gausssurf-bound 1";

std::size_t record_doubles(int sh_degree) { return 9 + 3 * static_cast<std::size_t>(sh_count(sh_degree)); }

} // namespace

void save_bound_scene(const BoundScene& bs, const std::string& prefix, const std::string& mesh_ext)
{
    bs.validate();
    const std::string mesh_path = prefix + mesh_ext;
    save_mesh(bs.mesh, mesh_path);

    nlohmann::ordered_json header;
    header["mesh"] = std::filesystem::path(mesh_path).filename().string();
    header["count"] = bs.size();
    header["n_per_triangle"] = bs.n_per_triangle;
    header["sh_degree"] = bs.sh_degree;
    header["record"] = {"tri_id", "bary_0", "bary_1", "bary_2", "log_scale2_0", "log_scale2_1", "rot2_x", "rot2_y",
                        "opacity_logit", "sh..."};
    header["encoding"] = "float64 little-endian";

    std::vector<double> rec;
    rec.reserve(bs.size() * record_doubles(bs.sh_degree));
    for (const BoundGaussian& b : bs.bound) {
        rec.push_back(b.tri_id);
        rec.insert(rec.end(), b.bary.data(), b.bary.data() + 3);
        rec.insert(rec.end(), b.log_scale2.data(), b.log_scale2.data() + 2);
        rec.insert(rec.end(), b.rot2.data(), b.rot2.data() + 2);
        rec.push_back(b.opacity_logit);
        for (const Vec3& s : b.sh) rec.insert(rec.end(), s.data(), s.data() + 3);
    }
    const std::string path = prefix + ".bound";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << kBoundMagic << '\n' << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size() * sizeof(double)));
    if (!out) throw IoError("failed writing '" + path + "'");
}

BoundScene load_bound_scene(const std::string& prefix)
{
    const std::string path = prefix + ".bound";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string magic, header_line;
    std::getline(in, magic);
    if (magic != kBoundMagic) throw FormatError("'" + path + "' is not a bound Gaussian table");
    std::getline(in, header_line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': bad header: " + e.what());
    }

    BoundScene bs;
    std::size_t count = 0;
    std::string mesh_name;
    try {
        count = header.at("count").get<std::size_t>();
        bs.n_per_triangle = header.at("n_per_triangle").get<int>();
        bs.sh_degree = header.at("sh_degree").get<int>();
        mesh_name = header.at("mesh").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': bad header: " + e.what());
    }
    if (bs.sh_degree < 0 || bs.sh_degree > 3) throw FormatError("'" + path + "': unsupported SH degree");
    const std::size_t rd = record_doubles(bs.sh_degree);
    std::vector<double> rec(count * rd);
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != rec.size() * sizeof(double)) {
        throw FormatError("'" + path + "' is truncated");
    }

    bs.mesh = load_mesh((std::filesystem::path(path).parent_path() / mesh_name).string());
    bs.bound.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double* r = rec.data() + i * rd;
        BoundGaussian& b = bs.bound[i];
        b.tri_id = static_cast<int>(r[0]);
        b.bary = Vec3(r[1], r[2], r[3]);
        b.log_scale2 = Vec2(r[4], r[5]);
        b.rot2 = Vec2(r[6], r[7]);
        b.opacity_logit = r[8];
        b.sh.resize(static_cast<std::size_t>(sh_count(bs.sh_degree)));
        for (std::size_t c = 0; c < b.sh.size(); ++c) b.sh[c] = Vec3(r[9 + 3 * c], r[10 + 3 * c], r[11 + 3 * c]);
    }
    try {
        bs.validate();
    } catch (const ValidationError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
    return bs;
}

void export_splat_ply(const BoundScene& bs, const std::string& path)
{
    save_gaussian_ply(bound_scene_to_world(bs), path);
}

} // namespace gausssurf
