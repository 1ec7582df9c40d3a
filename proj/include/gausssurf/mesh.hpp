#pragma once

#include "gausssurf/common.hpp"

#include <array>
#include <random>
#include <string>
#include <vector>

namespace gausssurf {

using Face = std::array<int, 3>;

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Vec3> vertex_normals;   // empty, or one per vertex

    std::size_t n_vertices() const { return vertices.size(); }
    std::size_t n_faces() const { return faces.size(); }
    bool empty() const { return faces.empty(); }

    /// Unnormalized (v1 - v0) x (v2 - v0).
    Vec3 face_cross(std::size_t f) const;
    Vec3 face_normal(std::size_t f) const { return face_cross(f).normalized(); }
    double face_area(std::size_t f) const { return 0.5 * face_cross(f).norm(); }

    /// Throws ValidationError on out-of-range indices or a normals size mismatch.
    void validate() const;
};

double surface_area(const TriangleMesh& mesh);

/// Volume enclosed by a closed mesh; positive when faces wind outward.
double signed_volume(const TriangleMesh& mesh);

/// Area-weighted vertex normals.
void compute_vertex_normals(TriangleMesh& mesh);

void flip_orientation(TriangleMesh& mesh);

/// Concatenates b after a. Normals are kept only if both meshes have them.
TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b);

/// Drops faces with area <= min_area or repeated indices, then unreferenced vertices.
TriangleMesh remove_degenerate(const TriangleMesh& mesh, double min_area = 0.0);

/// Removes vertices no face references, keeping the order of the rest.
TriangleMesh compact(const TriangleMesh& mesh);

struct MeshTopology {
    std::size_t vertices = 0;   // referenced by at least one face
    std::size_t edges = 0;
    std::size_t faces = 0;
    std::size_t boundary_edges = 0;
    std::size_t nonmanifold_edges = 0;
    std::size_t components = 0;

    long euler() const
    {
        return static_cast<long>(vertices) - static_cast<long>(edges) + static_cast<long>(faces);
    }
};

MeshTopology analyze_topology(const TriangleMesh& mesh);

/// Edge-connected component id per face; ids are ordered by first face.
std::vector<int> face_components(const TriangleMesh& mesh, int* n_components = nullptr);

/// Keeps components holding at least min_fraction of all faces.
TriangleMesh keep_large_components(const TriangleMesh& mesh, double min_fraction);

/// Subdivided icosahedron projected to the sphere, outward winding.
/// Vertex count is 10 * 4^subdivisions + 2.
TriangleMesh icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Area-uniform surface samples.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, std::mt19937_64& rng);

// OBJ (ascii) and binary little-endian PLY. save_mesh / load_mesh dispatch on
// the extension.
void save_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_obj(const std::string& path);
void save_mesh_ply(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_mesh_ply(const std::string& path);
void save_mesh(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_mesh(const std::string& path);

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Bounding-volume hierarchy for closest-point queries against a mesh.
class TriangleTree {
public:
    explicit TriangleTree(const TriangleMesh& mesh);

    struct Hit {
        Vec3 point = Vec3::Zero();
        int face = -1;
        double dist2 = 0;
    };

    /// Requires a non-empty mesh.
    Hit closest(const Vec3& p) const;
    double distance(const Vec3& p) const { return std::sqrt(closest(p).dist2); }

private:
    struct Node {
        Vec3 lo, hi;
        int begin = 0, end = 0;
        int left = -1, right = -1;
    };

    int build(int begin, int end);

    std::vector<Vec3> a_, b_, c_;   // triangle corners, in tree order
    std::vector<int> face_;
    std::vector<Vec3> centroid_;
    std::vector<Node> nodes_;
};

} // namespace gausssurf
