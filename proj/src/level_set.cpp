#include "gausssurf/level_set.hpp"

#include "gausssurf/parallel.hpp"
#include "gausssurf/ply.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace gausssurf {

void LevelSetConfig::validate() const
{
    if (!(lambda > 0)) throw ValidationError("lambda must be > 0");
    if (n_samples_per_ray < 2) throw ValidationError("n_samples_per_ray must be >= 2");
    if (!(sigma_span > 0)) throw ValidationError("sigma_span must be > 0");
    if (n_rays_per_view <= 0) throw ValidationError("n_rays_per_view must be > 0");
    if (!(residual_tol > 0)) throw ValidationError("residual_tol must be > 0");
}

void OrientedPointCloud::push_back(const Vec3& p, const Vec3& n, int view)
{
    points.push_back(p);
    normals.push_back(n);
    view_id.push_back(view);
}

double directional_std(const Gaussian3D& g, const Vec3& v)
{
    return std::sqrt(v.dot(g.covariance() * v));
}

std::optional<Crossing> ray_level_crossing(const Vec3& p, const Vec3& v, int g, const DensityField& field,
                                           const LevelSetConfig& cfg, CrossingStatus* status)
{
    auto fail = [&](CrossingStatus s) -> std::optional<Crossing> {
        if (status) *status = s;
        return std::nullopt;
    };
    const double half = cfg.sigma_span * field.term(g).directional_std(v);
    const int n = cfg.n_samples_per_ray;
    const double lambda = cfg.lambda;
    auto f = [&](double t) { return field.density(p + t * v) - lambda; };

    // first bracketed sign change, scanning away from the camera
    double ta = -half, fa = f(ta), tb = 0, fb = 0;
    bool found = false;
    for (int i = 1; i < n; ++i) {
        tb = -half + 2.0 * half * i / (n - 1);
        fb = f(tb);
        if ((fa < 0) != (fb < 0)) {
            found = true;
            break;
        }
        ta = tb;
        fa = fb;
    }
    if (!found) return fail(CrossingStatus::NoCrossing);

    const double tol = cfg.residual_tol * lambda;
    double t = ta - fa * (tb - ta) / (fb - fa);
    double ft = f(t);
    // Illinois false position keeps the bracket while converging superlinearly
    int side = 0;
    for (int it = 0; it < cfg.max_refine_iters && std::abs(ft) > tol; ++it) {
        if ((ft < 0) == (fa < 0)) {
            ta = t;
            fa = ft;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            tb = t;
            fb = ft;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        t = ta - fa * (tb - ta) / (fb - fa);
        ft = f(t);
    }
    if (std::abs(ft) > tol) return fail(CrossingStatus::Residual);

    const Vec3 x = p + t * v;
    Vec3 grad = field.density_gradient(x);
    const double gn = grad.norm();
    if (gn < kZeroGradient) return fail(CrossingStatus::ZeroGradient);
    Vec3 normal = grad / gn;
    if (normal.dot(v) > 0) normal = -normal;
    if (status) *status = CrossingStatus::Found;
    return Crossing{x, normal};
}

OrientedPointCloud sample_level_set(const Scene& scene, std::span<const Camera> cams, const LevelSetConfig& cfg,
                                    LevelSetStats* stats)
{
    cfg.validate();
    if (scene.empty()) throw EmptySceneError("cannot sample a level set of an empty scene");
    const NeighborIndex index = rebuild_index(scene);
    const DensityField field(scene, index);
    std::mt19937_64 rng(cfg.seed);
    OrientedPointCloud cloud;
    cloud.residual_tol = cfg.residual_tol * cfg.lambda;
    LevelSetStats st;

    for (std::size_t vi = 0; vi < cams.size(); ++vi) {
        const Camera& cam = cams[vi];
        const DepthMap depth = render_depth(scene, cam, cfg.render);
        std::vector<int> covered;
        for (int i = 0; i < depth.width * depth.height; ++i) {
            if (depth.acc_alpha[i] >= cfg.render.coverage_threshold) covered.push_back(i);
        }
        std::vector<int> picked;
        std::sample(covered.begin(), covered.end(), std::back_inserter(picked), cfg.n_rays_per_view, rng);

        const Vec3 center = cam.center();
        const Vec3 optical_axis = cam.rotation().row(2).transpose();
        std::vector<std::optional<Crossing>> hits(picked.size());
        std::vector<CrossingStatus> status(picked.size(), CrossingStatus::NoCrossing);
        parallel_for(picked.size(), [&](std::size_t k) {
            const int px = picked[k] % depth.width, py = picked[k] / depth.width;
            const Vec3 v = cam.pixel_ray(px + 0.5, py + 0.5);
            const Vec3 p = center + v * (depth.depth[picked[k]] / v.dot(optical_axis));
            hits[k] = ray_level_crossing(p, v, field.closest_gaussian(p), field, cfg, &status[k]);
        });
        st.rays += picked.size();
        for (std::size_t k = 0; k < picked.size(); ++k) {
            switch (status[k]) {
            case CrossingStatus::Found: cloud.push_back(hits[k]->point, hits[k]->normal, static_cast<int>(vi)); break;
            case CrossingStatus::NoCrossing: ++st.no_crossing; break;
            case CrossingStatus::ZeroGradient: ++st.zero_gradient; break;
            case CrossingStatus::Residual: ++st.residual_dropped; break;
            }
        }
    }
    st.points = cloud.size();
    if (stats) *stats = st;
    if (cloud.empty()) {
        std::ostringstream msg;
        msg << "no level-set points found (" << st.rays << " rays traced";
        if (st.rays > 0) msg << ", lambda " << cfg.lambda << " is probably above the scene's peak density";
        msg << ")";
        throw EmptyCloudError(msg.str());
    }
    return cloud;
}

std::pair<OrientedPointCloud, OrientedPointCloud> split_fg_bg(const OrientedPointCloud& cloud,
                                                              std::span<const Camera> cams)
{
    if (cams.empty()) throw ValidationError("split_fg_bg needs at least one camera");
    Vec3 lo = cams[0].center(), hi = lo;
    for (const auto& c : cams) {
        lo = lo.cwiseMin(c.center());
        hi = hi.cwiseMax(c.center());
    }
    std::pair<OrientedPointCloud, OrientedPointCloud> out;
    out.first.residual_tol = out.second.residual_tol = cloud.residual_tol;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const bool inside = (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
        (inside ? out.first : out.second).push_back(p, cloud.normals[i], cloud.view_id[i]);
    }
    return out;
}

void save_point_cloud_ply(const OrientedPointCloud& cloud, const std::string& path)
{
    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << '\n';
    for (const char* name : {"x", "y", "z", "nx", "ny", "nz"}) hdr << "property float " << name << '\n';
    hdr << "property int view\nend_header\n";
    std::vector<char> payload;
    payload.reserve(cloud.size() * 28);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) ply::append(payload, static_cast<float>(cloud.points[i][k]));
        for (int k = 0; k < 3; ++k) ply::append(payload, static_cast<float>(cloud.normals[i][k]));
        ply::append(payload, static_cast<std::int32_t>(cloud.view_id[i]));
    }
    ply::write_file(path, hdr.str(), payload);
}

OrientedPointCloud load_point_cloud_ply(const std::string& path)
{
    const auto bytes = ply::read_file(path);
    const ply::Header header = ply::parse_header(bytes, path);
    const ply::Element* vertex = header.find("vertex");
    if (!vertex) throw FormatError("'" + path + "': no vertex element");
    std::vector<std::size_t> offsets;
    std::size_t stride = 0;
    for (const auto& p : vertex->properties) {
        if (p.is_list) throw FormatError("'" + path + "': list property in point cloud");
        offsets.push_back(stride);
        stride += ply::type_size(p.type);
    }
    auto column = [&](const char* name) {
        const int idx = vertex->find(name);
        if (idx < 0) throw FormatError("'" + path + "': missing required property '" + name + "'");
        return idx;
    };
    const int cols[6] = {column("x"), column("y"), column("z"), column("nx"), column("ny"), column("nz")};
    const int view_col = vertex->find("view");
    if (header.data_offset + stride * vertex->count > bytes.size()) {
        throw FormatError("'" + path + "': truncated vertex data");
    }
    OrientedPointCloud cloud;
    const char* base = bytes.data() + header.data_offset;
    for (std::size_t v = 0; v < vertex->count; ++v) {
        const char* rec = base + v * stride;
        auto get = [&](int col) { return ply::read_scalar(rec + offsets[col], vertex->properties[col].type); };
        cloud.push_back(Vec3(get(cols[0]), get(cols[1]), get(cols[2])), Vec3(get(cols[3]), get(cols[4]), get(cols[5])),
                        view_col >= 0 ? static_cast<int>(get(view_col)) : -1);
    }
    return cloud;
}

} // namespace gausssurf
