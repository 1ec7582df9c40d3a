#pragma once

#include "gausssurf/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gausssurf {

/// Axis convention of a camera pose as written in a camera file.
///   OpenCV: x right, y down, camera looks along +z.
///   OpenGL: x right, y up, camera looks along -z.
/// Poses are stored internally in the OpenCV convention.
enum class CameraConvention { OpenCV, OpenGL };

/// Pinhole camera. Pixel (i, j) covers the continuous square
/// [i, i+1) x [j, j+1); its center is at (i + 0.5, j + 0.5).
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 1, fy = 1, cx = 0, cy = 0;
    Mat4 world_to_cam = Mat4::Identity();   // OpenCV convention

    Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }
    Vec3 center() const { return -rotation().transpose() * translation(); }

    Vec3 to_camera(const Vec3& p) const { return rotation() * p + translation(); }

    /// (u, v, depth) of a world point; nullopt when depth <= near.
    std::optional<Vec3> project(const Vec3& p, double near = 0.01) const;

    /// Unit world-space direction of the ray through continuous pixel (u, v).
    Vec3 pixel_ray(double u, double v) const;

    /// Throws ValidationError if intrinsics or rotation block are invalid.
    void validate(double tol = 1e-6) const;

    /// Camera at `eye` looking at `target`, OpenCV axes, square pixels.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                          double fov_x_radians);
};

/// Converts a pose expressed in `from` into the internal OpenCV convention.
Mat4 to_opencv_pose(const Mat4& world_to_cam, CameraConvention from);

/// Reads a JSON array of {width,height,fx,fy,cx,cy,world_to_cam[16]} objects.
/// An optional top-level object {"convention": "...", "cameras": [...]} or a
/// per-camera "convention" key selects the pose convention (default OpenCV).
/// Rotation blocks that deviate from orthonormal by more than 1e-4 are rejected.
std::vector<Camera> load_cameras(const std::string& path);
std::vector<Camera> parse_cameras(const std::string& json_text);

void save_cameras(const std::vector<Camera>& cameras, const std::string& path);
std::string cameras_to_json(const std::vector<Camera>& cameras);

} // namespace gausssurf
