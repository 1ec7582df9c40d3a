#include "gausssurf/scene_io.hpp"

#include "gausssurf/ply.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gausssurf {

namespace {

std::vector<std::string> splat_property_names(int sh_degree)
{
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) {
        names.push_back("f_rest_" + std::to_string(i));
    }
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) {
        names.push_back("scale_" + std::to_string(i));
    }
    for (int i = 0; i < 4; ++i) {
        names.push_back("rot_" + std::to_string(i));
    }
    return names;
}

int degree_from_rest_count(int rest, const std::string& path)
{
    for (int d = 0; d <= 8; ++d) {
        if (3 * (sh_count(d) - 1) == rest) {
            return d;
        }
    }
    throw FormatError("'" + path + "': " + std::to_string(rest) + " f_rest properties do not match any SH degree");
}

} // namespace

std::size_t gaussian_record_size(int sh_degree) { return 4 * splat_property_names(sh_degree).size(); }

Scene load_gaussian_ply(const std::string& path)
{
    const auto bytes = ply::read_file(path);
    const auto header = ply::parse_header(bytes, path);
    const ply::Element* vertex = header.find("vertex");
    if (vertex == nullptr) {
        throw FormatError("'" + path + "': no vertex element");
    }
    if (header.elements.front().name != "vertex") {
        throw FormatError("'" + path + "': vertex must be the first element");
    }
    for (const auto& p : vertex->properties) {
        if (p.is_list) {
            throw FormatError("'" + path + "': list property '" + p.name + "' in vertex element");
        }
    }
    if (vertex->count == 0) {
        throw EmptySceneError("'" + path + "': scene has zero vertices");
    }

    int rest = 0;
    while (vertex->find("f_rest_" + std::to_string(rest)) >= 0) {
        ++rest;
    }
    Scene scene;
    scene.sh_degree = degree_from_rest_count(rest, path);
    const int n_coeffs = sh_count(scene.sh_degree);

    std::vector<std::size_t> offsets(vertex->properties.size());
    std::size_t stride = 0;
    for (std::size_t i = 0; i < vertex->properties.size(); ++i) {
        offsets[i] = stride;
        stride += ply::type_size(vertex->properties[i].type);
    }
    auto column = [&](const std::string& name) {
        const int idx = vertex->find(name);
        if (idx < 0) {
            throw FormatError("'" + path + "': missing required property '" + name + "'");
        }
        return idx;
    };
    int pos[3], dc[3], scale[3], rot[4];
    for (int i = 0; i < 3; ++i) {
        pos[i] = column(std::string(1, "xyz"[i]));
        dc[i] = column("f_dc_" + std::to_string(i));
        scale[i] = column("scale_" + std::to_string(i));
    }
    for (int i = 0; i < 4; ++i) {
        rot[i] = column("rot_" + std::to_string(i));
    }
    const int opacity = column("opacity");
    std::vector<int> rest_cols(rest);
    for (int i = 0; i < rest; ++i) {
        rest_cols[i] = column("f_rest_" + std::to_string(i));
    }

    if (header.data_offset + stride * vertex->count > bytes.size()) {
        throw FormatError("'" + path + "': truncated vertex data");
    }

    scene.gaussians.resize(vertex->count);
    const char* base = bytes.data() + header.data_offset;
    for (std::size_t v = 0; v < vertex->count; ++v) {
        const char* rec = base + v * stride;
        auto get = [&](int col) { return ply::read_scalar(rec + offsets[col], vertex->properties[col].type); };
        Gaussian3D& g = scene.gaussians[v];
        g.sh.assign(n_coeffs, Vec3::Zero());
        for (int i = 0; i < 3; ++i) {
            g.mean[i] = get(pos[i]);
            g.log_scale[i] = get(scale[i]);
            g.sh[0][i] = get(dc[i]);
        }
        // f_rest is channel-major: all coefficients of R, then G, then B.
        for (int c = 0; c < 3; ++c) {
            for (int k = 1; k < n_coeffs; ++k) {
                g.sh[k][c] = get(rest_cols[c * (n_coeffs - 1) + (k - 1)]);
            }
        }
        for (int i = 0; i < 4; ++i) {
            g.rot[i] = get(rot[i]);
        }
        normalize_quat(g.rot);
        g.opacity_logit = get(opacity);
    }
    return scene;
}

void save_gaussian_ply(const Scene& scene, const std::string& path)
{
    if (path.empty()) {
        throw IoError("empty output path for splat PLY");
    }
    scene.validate();
    const auto names = splat_property_names(scene.sh_degree);
    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << '\n';
    for (const auto& n : names) {
        hdr << "property float " << n << '\n';
    }
    hdr << "end_header\n";

    const int n_coeffs = sh_count(scene.sh_degree);
    std::vector<char> payload;
    payload.reserve(scene.size() * 4 * names.size());
    for (const auto& g : scene.gaussians) {
        auto put = [&](double v) { ply::append(payload, static_cast<float>(v)); };
        for (int i = 0; i < 3; ++i) put(g.mean[i]);
        for (int i = 0; i < 3; ++i) put(0.0);
        for (int i = 0; i < 3; ++i) put(g.sh[0][i]);
        for (int c = 0; c < 3; ++c) {
            for (int k = 1; k < n_coeffs; ++k) {
                put(g.sh[k][c]);
            }
        }
        put(g.opacity_logit);
        for (int i = 0; i < 3; ++i) put(g.log_scale[i]);
        for (int i = 0; i < 4; ++i) put(g.rot[i]);
    }
    ply::write_file(path, hdr.str(), payload);
}

SurfaceKind parse_surface_kind(const std::string& s)
{
    if (s == "sphere") return SurfaceKind::Sphere;
    if (s == "box") return SurfaceKind::Box;
    if (s == "plane") return SurfaceKind::Plane;
    throw ValidationError("unknown surface '" + s + "' (expected sphere, box or plane)");
}

std::string to_string(SurfaceKind k)
{
    switch (k) {
    case SurfaceKind::Sphere: return "sphere";
    case SurfaceKind::Box: return "box";
    case SurfaceKind::Plane: return "plane";
    }
    return "?";
}

void SyntheticSpec::validate() const
{
    if (n_gaussians <= 0) throw ValidationError("synthetic scene needs n_gaussians > 0");
    if (!(noise >= 0)) throw ValidationError("synthetic noise must be >= 0");
    if (surface == SurfaceKind::Sphere && !(radius > 0)) throw ValidationError("sphere radius must be > 0");
    if (surface == SurfaceKind::Box && !(extents.minCoeff() > 0)) throw ValidationError("box extents must be > 0");
    if (surface == SurfaceKind::Plane && normal.norm() < 1e-12) throw ValidationError("plane normal is zero");
    if (n_views <= 0 || n_holdout < 0) throw ValidationError("synthetic scene needs at least one view");
    if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
    if (!(thin_ratio > 0)) throw ValidationError("thin_ratio must be > 0");
    if (!(tangent_ratio > 0)) throw ValidationError("tangent_ratio must be > 0");
}

double GroundTruthSurface::sdf(const Vec3& p) const
{
    switch (kind) {
    case SurfaceKind::Sphere: return (p - center).norm() - radius;
    case SurfaceKind::Box: {
        const Vec3 q = (p - center).cwiseAbs() - 0.5 * extents;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case SurfaceKind::Plane: return p.dot(normal) - offset;
    }
    return 0;
}

Vec3 GroundTruthSurface::surface_normal(const Vec3& p) const
{
    switch (kind) {
    case SurfaceKind::Sphere: return (p - center).normalized();
    case SurfaceKind::Plane: return normal;
    case SurfaceKind::Box: {
        const Vec3 q = (p - center).cwiseQuotient(0.5 * extents);
        int axis = 0;
        for (int i = 1; i < 3; ++i) {
            if (std::abs(q[i]) > std::abs(q[axis])) axis = i;
        }
        Vec3 n = Vec3::Zero();
        n[axis] = q[axis] >= 0 ? 1.0 : -1.0;
        return n;
    }
    }
    return Vec3::UnitZ();
}

double GroundTruthSurface::object_scale() const
{
    switch (kind) {
    case SurfaceKind::Sphere: return radius;
    case SurfaceKind::Box: return 0.5 * extents.maxCoeff();
    case SurfaceKind::Plane: return patch_half_size;
    }
    return 1.0;
}

namespace {

// Orthonormal tangent pair for a unit normal.
std::pair<Vec3, Vec3> tangent_frame(const Vec3& n)
{
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 t1 = n.cross(helper).normalized();
    return {t1, n.cross(t1)};
}

Vec3 plane_origin(const GroundTruthSurface& s) { return s.normal * s.offset; }

} // namespace

std::vector<Vec3> GroundTruthSurface::sample(std::size_t n, std::mt19937_64& rng) const
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
        case SurfaceKind::Sphere: {
            const double z = 2 * u(rng) - 1;
            const double phi = 2 * std::numbers::pi * u(rng);
            const double r = std::sqrt(std::max(0.0, 1 - z * z));
            out.push_back(center + radius * Vec3(r * std::cos(phi), r * std::sin(phi), z));
            break;
        }
        case SurfaceKind::Box: {
            const Vec3 e = extents;
            const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
            double pick = u(rng) * (areas[0] + areas[1] + areas[2]);
            int axis = 0;
            while (axis < 2 && pick > areas[axis]) {
                pick -= areas[axis];
                ++axis;
            }
            Vec3 p(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
            p[axis] = u(rng) < 0.5 ? -0.5 : 0.5;
            out.push_back(center + p.cwiseProduct(e));
            break;
        }
        case SurfaceKind::Plane: {
            const auto [t1, t2] = tangent_frame(normal);
            out.push_back(plane_origin(*this) + patch_half_size * ((2 * u(rng) - 1) * t1 + (2 * u(rng) - 1) * t2));
            break;
        }
        }
    }
    return out;
}

SyntheticScene make_synthetic_scene(const SyntheticSpec& spec)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    SyntheticScene out;
    GroundTruthSurface& s = out.surface;
    s.kind = spec.surface;
    s.center = spec.center;
    s.radius = spec.radius;
    s.extents = spec.extents;
    s.normal = spec.normal.normalized();
    s.offset = spec.offset;

    const std::size_t n = static_cast<std::size_t>(spec.n_gaussians);
    std::vector<Vec3> points;
    points.reserve(n);
    double area = 0;
    switch (spec.surface) {
    case SurfaceKind::Sphere: {
        // Fibonacci lattice: near-uniform spacing; seed picks a random offset.
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        const double phase = 2 * std::numbers::pi * u(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
            const double r = std::sqrt(1 - z * z);
            const double phi = golden * static_cast<double>(i) + phase;
            points.push_back(s.center + s.radius * Vec3(r * std::cos(phi), r * std::sin(phi), z));
        }
        area = 4 * std::numbers::pi * s.radius * s.radius;
        break;
    }
    case SurfaceKind::Box:
        points = s.sample(n, rng);
        area = 2 * (s.extents.x() * s.extents.y() + s.extents.y() * s.extents.z() + s.extents.x() * s.extents.z());
        break;
    case SurfaceKind::Plane: {
        const auto [t1, t2] = tangent_frame(s.normal);
        const int side = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
        for (std::size_t i = 0; i < n; ++i) {
            const double a = (static_cast<double>(i % side) + 0.5 + 0.3 * (u(rng) - 0.5)) / side;
            const double b = (static_cast<double>(i / side) + 0.5 + 0.3 * (u(rng) - 0.5)) / side;
            points.push_back(plane_origin(s) + s.patch_half_size * ((2 * a - 1) * t1 + (2 * b - 1) * t2));
        }
        area = 4 * s.patch_half_size * s.patch_half_size;
        break;
    }
    }

    const double spacing = std::sqrt(area / static_cast<double>(n));
    const double tangent_sigma = spec.tangent_ratio * spacing;
    const double thin_sigma = spec.thin_ratio * s.object_scale();
    const Vec3 phases(2 * std::numbers::pi * u(rng), 2 * std::numbers::pi * u(rng), 2 * std::numbers::pi * u(rng));
    const double freq = 3.0 / s.object_scale();

    out.scene.sh_degree = 0;
    out.scene.gaussians.reserve(n);
    for (const Vec3& p0 : points) {
        const Vec3 normal = s.surface_normal(p0);
        auto [t1, t2] = tangent_frame(normal);
        const double spin = 2 * std::numbers::pi * u(rng);
        const Vec3 a1 = std::cos(spin) * t1 + std::sin(spin) * t2;
        const Vec3 a2 = normal.cross(a1);

        Gaussian3D g;
        const double shift = spec.noise > 0 ? spec.noise * (2 * u(rng) - 1) : 0.0;
        g.mean = p0 + shift * normal;
        Mat3 r;
        r.col(0) = normal;
        r.col(1) = a1;
        r.col(2) = a2;
        g.rot = rotation_to_quat(r);
        g.log_scale = Vec3(std::log(thin_sigma), std::log(tangent_sigma), std::log(tangent_sigma));
        g.opacity_logit = 10.0;   // alpha = 0.99995
        Vec3 rgb;
        for (int c = 0; c < 3; ++c) {
            rgb[c] = 0.5 + 0.35 * std::sin(freq * p0[(c + 1) % 3] + 0.7 * freq * p0[c] + phases[c]);
        }
        g.sh = {rgb_to_sh_dc(rgb)};
        out.scene.gaussians.push_back(std::move(g));
    }

    // Cameras on a Fibonacci sphere (hemisphere for planes) at 3x object scale.
    const Vec3 target = spec.surface == SurfaceKind::Plane ? plane_origin(s) : s.center;
    const double dist = 3.0 * s.object_scale();
    const double fov = 2.0 * std::asin(std::min(0.95, 1.35 / 3.0));
    auto ring = [&](int count, double offset_frac) {
        std::vector<Camera> cams;
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < count; ++i) {
            const double t = (i + offset_frac) / count;
            const double z = spec.surface == SurfaceKind::Plane ? 0.35 + 0.6 * t : 0.85 - 1.7 * t;
            const double r = std::sqrt(std::max(0.0, 1 - z * z));
            const double phi = golden * (i + offset_frac) * 7.0;
            Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
            if (spec.surface == SurfaceKind::Plane) {
                const auto [t1, t2] = tangent_frame(s.normal);
                dir = dir.x() * t1 + dir.y() * t2 + dir.z() * s.normal;
            }
            const Vec3 up = spec.surface == SurfaceKind::Plane ? s.normal : Vec3::UnitZ();
            cams.push_back(Camera::look_at(target + dist * dir, target, up, spec.width, spec.height, fov));
        }
        return cams;
    };
    out.cameras = ring(spec.n_views, 0.5);
    out.holdout_cameras = ring(spec.n_holdout, 0.0);
    return out;
}

} // namespace gausssurf
