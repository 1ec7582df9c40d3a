#include "gausssurf/mesh.hpp"

#include "gausssurf/ply.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace gausssurf {

Vec3 TriangleMesh::face_cross(std::size_t f) const
{
    const Face& t = faces[f];
    return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
}

void TriangleMesh::validate() const
{
    const int n = static_cast<int>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int k : faces[f]) {
            if (k < 0 || k >= n) {
                throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(k) +
                                      " of " + std::to_string(n));
            }
        }
    }
    if (!vertex_normals.empty() && vertex_normals.size() != vertices.size()) {
        throw ValidationError("vertex normal count does not match vertex count");
    }
}

double surface_area(const TriangleMesh& mesh)
{
    double a = 0;
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) a += mesh.face_area(f);
    return a;
}

double signed_volume(const TriangleMesh& mesh)
{
    double v = 0;
    for (const Face& t : mesh.faces) {
        v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
    }
    return v / 6.0;
}

void compute_vertex_normals(TriangleMesh& mesh)
{
    mesh.vertex_normals.assign(mesh.n_vertices(), Vec3::Zero());
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
        const Vec3 c = mesh.face_cross(f);
        for (int k : mesh.faces[f]) mesh.vertex_normals[k] += c;
    }
    for (auto& n : mesh.vertex_normals) {
        const double len = n.norm();
        if (len > 0) n /= len;
    }
}

void flip_orientation(TriangleMesh& mesh)
{
    for (Face& t : mesh.faces) std::swap(t[1], t[2]);
    for (auto& n : mesh.vertex_normals) n = -n;
}

TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b)
{
    TriangleMesh out = a;
    const int off = static_cast<int>(a.n_vertices());
    out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (const Face& t : b.faces) out.faces.push_back({t[0] + off, t[1] + off, t[2] + off});
    const bool normals = (!a.vertex_normals.empty() || a.vertices.empty()) &&
                         (!b.vertex_normals.empty() || b.vertices.empty());
    if (normals) {
        out.vertex_normals.insert(out.vertex_normals.end(), b.vertex_normals.begin(), b.vertex_normals.end());
    } else {
        out.vertex_normals.clear();
    }
    return out;
}

TriangleMesh compact(const TriangleMesh& mesh)
{
    std::vector<int> remap(mesh.n_vertices(), -1);
    for (const Face& t : mesh.faces)
        for (int k : t) remap[k] = 0;
    TriangleMesh out;
    for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
        if (remap[i] < 0) continue;
        remap[i] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[i]);
        if (!mesh.vertex_normals.empty()) out.vertex_normals.push_back(mesh.vertex_normals[i]);
    }
    out.faces.reserve(mesh.n_faces());
    for (const Face& t : mesh.faces) out.faces.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
    return out;
}

TriangleMesh remove_degenerate(const TriangleMesh& mesh, double min_area)
{
    TriangleMesh kept;
    kept.vertices = mesh.vertices;
    kept.vertex_normals = mesh.vertex_normals;
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
        const Face& t = mesh.faces[f];
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        if (!(mesh.face_area(f) > min_area)) continue;
        kept.faces.push_back(t);
    }
    return compact(kept);
}

namespace {

struct EdgeRef {
    int a, b;   // a < b
    int face;

    bool operator<(const EdgeRef& o) const { return std::tie(a, b, face) < std::tie(o.a, o.b, o.face); }
};

std::vector<EdgeRef> sorted_edges(const TriangleMesh& mesh)
{
    std::vector<EdgeRef> e;
    e.reserve(mesh.n_faces() * 3);
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
        const Face& t = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            const int u = t[k], v = t[(k + 1) % 3];
            e.push_back({std::min(u, v), std::max(u, v), static_cast<int>(f)});
        }
    }
    std::sort(e.begin(), e.end());
    return e;
}

int find_root(std::vector<int>& parent, int x)
{
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

} // namespace

std::vector<int> face_components(const TriangleMesh& mesh, int* n_components)
{
    std::vector<int> parent(mesh.n_faces());
    std::iota(parent.begin(), parent.end(), 0);
    const auto edges = sorted_edges(mesh);
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (edges[i].a == edges[i - 1].a && edges[i].b == edges[i - 1].b) {
            const int r1 = find_root(parent, edges[i].face), r2 = find_root(parent, edges[i - 1].face);
            if (r1 != r2) parent[std::max(r1, r2)] = std::min(r1, r2);
        }
    }
    std::vector<int> label(mesh.n_faces(), -1), root_label(mesh.n_faces(), -1);
    int count = 0;
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
        const int r = find_root(parent, static_cast<int>(f));
        if (root_label[r] < 0) root_label[r] = count++;
        label[f] = root_label[r];
    }
    if (n_components) *n_components = count;
    return label;
}

MeshTopology analyze_topology(const TriangleMesh& mesh)
{
    MeshTopology topo;
    topo.faces = mesh.n_faces();
    std::vector<char> used(mesh.n_vertices(), 0);
    for (const Face& t : mesh.faces)
        for (int k : t) used[k] = 1;
    topo.vertices = static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));

    const auto edges = sorted_edges(mesh);
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j].a == edges[i].a && edges[j].b == edges[i].b) ++j;
        ++topo.edges;
        if (j - i == 1) ++topo.boundary_edges;
        if (j - i > 2) ++topo.nonmanifold_edges;
        i = j;
    }
    int comps = 0;
    face_components(mesh, &comps);
    topo.components = static_cast<std::size_t>(comps);
    return topo;
}

TriangleMesh keep_large_components(const TriangleMesh& mesh, double min_fraction)
{
    int n = 0;
    const auto label = face_components(mesh, &n);
    std::vector<std::size_t> count(n, 0);
    for (int l : label) ++count[l];
    const double need = min_fraction * static_cast<double>(mesh.n_faces());
    TriangleMesh out;
    out.vertices = mesh.vertices;
    out.vertex_normals = mesh.vertex_normals;
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) {
        if (static_cast<double>(count[label[f]]) >= need) out.faces.push_back(mesh.faces[f]);
    }
    return compact(out);
}

TriangleMesh icosphere(int subdivisions, double radius, const Vec3& center)
{
    if (subdivisions < 0) throw ValidationError("icosphere subdivisions must be >= 0");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                           {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<Face> next;
        next.reserve(f.size() * 4);
        for (const Face& tri : f) {
            const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    TriangleMesh mesh;
    mesh.faces = std::move(f);
    for (const Vec3& p : v) mesh.vertices.push_back(center + radius * p);
    return mesh;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, std::mt19937_64& rng)
{
    if (mesh.empty()) throw ValidationError("cannot sample an empty mesh");
    std::vector<double> cdf(mesh.n_faces());
    double total = 0;
    for (std::size_t f = 0; f < mesh.n_faces(); ++f) cdf[f] = total += mesh.face_area(f);
    if (!(total > 0)) throw ValidationError("cannot sample a mesh with zero area");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = u(rng) * total;
        const auto f = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
        const Face& t = mesh.faces[std::min(f, mesh.n_faces() - 1)];
        double a = u(rng), b = u(rng);
        if (a + b > 1) {
            a = 1 - a;
            b = 1 - b;
        }
        const Vec3& p0 = mesh.vertices[t[0]];
        out.push_back(p0 + a * (mesh.vertices[t[1]] - p0) + b * (mesh.vertices[t[2]] - p0));
    }
    return out;
}

// ---- I/O ----

void save_obj(const TriangleMesh& mesh, const std::string& path)
{
    mesh.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    char line[128];
    for (const Vec3& p : mesh.vertices) {
        std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out << line;
    }
    for (const Vec3& n : mesh.vertex_normals) {
        std::snprintf(line, sizeof line, "vn %.9g %.9g %.9g\n", n.x(), n.y(), n.z());
        out << line;
    }
    const bool normals = !mesh.vertex_normals.empty();
    for (const Face& t : mesh.faces) {
        if (normals) {
            out << "f " << t[0] + 1 << "//" << t[0] + 1 << ' ' << t[1] + 1 << "//" << t[1] + 1 << ' ' << t[2] + 1
                << "//" << t[2] + 1 << '\n';
        } else {
            out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

TriangleMesh load_obj(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    TriangleMesh mesh;
    std::vector<Vec3> normals;
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) {
        throw FormatError("'" + path + "' line " + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "v" || kw == "vn") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) fail("expected three coordinates");
            (kw == "v" ? mesh.vertices : normals).push_back(p);
        } else if (kw == "f") {
            std::vector<int> ids;
            std::string tok;
            while (ls >> tok) {
                int idx = 0;
                try {
                    idx = std::stoi(tok.substr(0, tok.find('/')));
                } catch (const std::exception&) {
                    fail("bad face index '" + tok + "'");
                }
                // negative indices count back from the latest vertex
                idx = idx < 0 ? static_cast<int>(mesh.vertices.size()) + idx : idx - 1;
                if (idx < 0 || idx >= static_cast<int>(mesh.vertices.size())) fail("face index out of range");
                ids.push_back(idx);
            }
            if (ids.size() < 3) fail("face with fewer than three vertices");
            for (std::size_t k = 1; k + 1 < ids.size(); ++k) mesh.faces.push_back({ids[0], ids[k], ids[k + 1]});
        }
    }
    // only trust normals that map one-to-one onto vertices
    if (normals.size() == mesh.vertices.size()) mesh.vertex_normals = std::move(normals);
    return mesh;
}

void save_mesh_ply(const TriangleMesh& mesh, const std::string& path)
{
    mesh.validate();
    const bool normals = !mesh.vertex_normals.empty();
    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.n_vertices() << '\n'
        << "property float x\nproperty float y\nproperty float z\n";
    if (normals) hdr << "property float nx\nproperty float ny\nproperty float nz\n";
    hdr << "element face " << mesh.n_faces() << "\nproperty list uchar int vertex_indices\nend_header\n";
    std::vector<char> payload;
    for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
        for (int k = 0; k < 3; ++k) ply::append(payload, static_cast<float>(mesh.vertices[i][k]));
        if (normals)
            for (int k = 0; k < 3; ++k) ply::append(payload, static_cast<float>(mesh.vertex_normals[i][k]));
    }
    for (const Face& t : mesh.faces) {
        ply::append(payload, static_cast<std::uint8_t>(3));
        for (int k : t) ply::append(payload, static_cast<std::int32_t>(k));
    }
    ply::write_file(path, hdr.str(), payload);
}

TriangleMesh load_mesh_ply(const std::string& path)
{
    const auto bytes = ply::read_file(path);
    const ply::Header header = ply::parse_header(bytes, path);
    TriangleMesh mesh;
    std::size_t pos = header.data_offset;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw FormatError("'" + path + "': truncated data");
    };
    auto scalar = [&](ply::Type t) {
        need(ply::type_size(t));
        const double v = ply::read_scalar(bytes.data() + pos, t);
        pos += ply::type_size(t);
        return v;
    };
    bool saw_vertex = false;
    for (const ply::Element& e : header.elements) {
        if (e.name == "vertex") {
            saw_vertex = true;
            const int cols[3] = {e.find("x"), e.find("y"), e.find("z")};
            if (cols[0] < 0 || cols[1] < 0 || cols[2] < 0) throw FormatError("'" + path + "': vertex without x,y,z");
            const int ncols[3] = {e.find("nx"), e.find("ny"), e.find("nz")};
            const bool normals = ncols[0] >= 0 && ncols[1] >= 0 && ncols[2] >= 0;
            std::vector<double> rec(e.properties.size());
            for (std::size_t v = 0; v < e.count; ++v) {
                for (std::size_t p = 0; p < e.properties.size(); ++p) {
                    if (e.properties[p].is_list) throw FormatError("'" + path + "': list property on vertices");
                    rec[p] = scalar(e.properties[p].type);
                }
                mesh.vertices.emplace_back(rec[cols[0]], rec[cols[1]], rec[cols[2]]);
                if (normals) mesh.vertex_normals.emplace_back(rec[ncols[0]], rec[ncols[1]], rec[ncols[2]]);
            }
        } else {
            int list_col = -1;
            if (e.name == "face") {
                list_col = e.find("vertex_indices");
                if (list_col < 0) list_col = e.find("vertex_index");
                if (list_col < 0) throw FormatError("'" + path + "': face element without vertex_indices");
            }
            for (std::size_t r = 0; r < e.count; ++r) {
                for (std::size_t p = 0; p < e.properties.size(); ++p) {
                    const ply::Property& prop = e.properties[p];
                    if (!prop.is_list) {
                        scalar(prop.type);
                        continue;
                    }
                    const auto n = static_cast<std::size_t>(scalar(prop.count_type));
                    std::vector<int> ids(n);
                    for (auto& id : ids) id = static_cast<int>(scalar(prop.type));
                    if (static_cast<int>(p) != list_col) continue;
                    if (n < 3) throw FormatError("'" + path + "': face with fewer than three vertices");
                    for (std::size_t k = 1; k + 1 < n; ++k) mesh.faces.push_back({ids[0], ids[k], ids[k + 1]});
                }
            }
        }
    }
    if (!saw_vertex) throw FormatError("'" + path + "': no vertex element");
    try {
        mesh.validate();
    } catch (const ValidationError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
    return mesh;
}

namespace {

std::string lower_extension(const std::string& path)
{
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

} // namespace

void save_mesh(const TriangleMesh& mesh, const std::string& path)
{
    const std::string ext = lower_extension(path);
    if (ext == ".obj") return save_obj(mesh, path);
    if (ext == ".ply") return save_mesh_ply(mesh, path);
    throw ValidationError("unsupported mesh extension '" + ext + "' (use .obj or .ply)");
}

TriangleMesh load_mesh(const std::string& path)
{
    const std::string ext = lower_extension(path);
    if (ext == ".obj") return load_obj(path);
    if (ext == ".ply") return load_mesh_ply(path);
    throw ValidationError("unsupported mesh extension '" + ext + "' (use .obj or .ply)");
}

// ---- closest point queries ----

// Region-based closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
    const double denom = va + vb + vc;
    if (!(std::abs(denom) > 0)) return a;   // degenerate triangle
    return a + ab * (vb / denom) + ac * (vc / denom);
}

TriangleTree::TriangleTree(const TriangleMesh& mesh)
{
    mesh.validate();
    const std::size_t n = mesh.n_faces();
    for (std::size_t f = 0; f < n; ++f) {
        const Face& t = mesh.faces[f];
        a_.push_back(mesh.vertices[t[0]]);
        b_.push_back(mesh.vertices[t[1]]);
        c_.push_back(mesh.vertices[t[2]]);
        face_.push_back(static_cast<int>(f));
        centroid_.push_back((a_.back() + b_.back() + c_.back()) / 3.0);
    }
    if (n > 0) build(0, static_cast<int>(n));
}

int TriangleTree::build(int begin, int end)
{
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i) {
        node.lo = node.lo.cwiseMin(a_[i]).cwiseMin(b_[i]).cwiseMin(c_[i]);
        node.hi = node.hi.cwiseMax(a_[i]).cwiseMax(b_[i]).cwiseMax(c_[i]);
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= 4) return id;

    Vec3 clo = centroid_[begin], chi = clo;
    for (int i = begin; i < end; ++i) {
        clo = clo.cwiseMin(centroid_[i]);
        chi = chi.cwiseMax(centroid_[i]);
    }
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::vector<int> order(end - begin);
    std::iota(order.begin(), order.end(), begin);
    std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(), [&](int x, int y) {
        return centroid_[x][axis] < centroid_[y][axis] || (centroid_[x][axis] == centroid_[y][axis] && x < y);
    });
    auto permute = [&](auto& vec) {
        std::remove_reference_t<decltype(vec)> tmp;
        tmp.reserve(order.size());
        for (int i : order) tmp.push_back(vec[i]);
        std::copy(tmp.begin(), tmp.end(), vec.begin() + begin);
    };
    permute(a_);
    permute(b_);
    permute(c_);
    permute(face_);
    permute(centroid_);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

TriangleTree::Hit TriangleTree::closest(const Vec3& p) const
{
    if (nodes_.empty()) throw ValidationError("closest-point query on an empty mesh");
    Hit best;
    best.dist2 = std::numeric_limits<double>::infinity();
    auto box_dist2 = [&](const Node& n) { return (p - p.cwiseMax(n.lo).cwiseMin(n.hi)).squaredNorm(); };
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& n = nodes_[stack.back()];
        stack.pop_back();
        if (box_dist2(n) >= best.dist2) continue;
        if (n.left < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const Vec3 q = closest_point_on_triangle(p, a_[i], b_[i], c_[i]);
                const double d2 = (q - p).squaredNorm();
                if (d2 < best.dist2 || (d2 == best.dist2 && face_[i] < best.face)) {
                    best = {q, face_[i], d2};
                }
            }
            continue;
        }
        // visit the nearer child first
        const double dl = box_dist2(nodes_[n.left]), dr = box_dist2(nodes_[n.right]);
        if (dl < dr) {
            stack.push_back(n.right);
            stack.push_back(n.left);
        } else {
            stack.push_back(n.left);
            stack.push_back(n.right);
        }
    }
    return best;
}

} // namespace gausssurf
