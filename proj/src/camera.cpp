#include "gausssurf/camera.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace gausssurf {

using nlohmann::json;

std::optional<Vec3> Camera::project(const Vec3& p, double near) const
{
    const Vec3 c = to_camera(p);
    if (c.z() <= near) {
        return std::nullopt;
    }
    return Vec3(fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy, c.z());
}

Vec3 Camera::pixel_ray(double u, double v) const
{
    const Vec3 d_cam((u - cx) / fx, (v - cy) / fy, 1.0);
    return (rotation().transpose() * d_cam).normalized();
}

void Camera::validate(double tol) const
{
    if (width <= 0 || height <= 0) {
        throw ValidationError("camera has non-positive image size");
    }
    if (!(fx > 0) || !(fy > 0)) {
        throw ValidationError("camera focal lengths must be positive");
    }
    const Mat3 r = rotation();
    const double ortho = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tol || std::abs(r.determinant() - 1.0) > tol) {
        throw ValidationError("camera rotation is not orthonormal (deviation " + std::to_string(ortho) + ")");
    }
    const auto bottom = world_to_cam.row(3);
    if (std::abs(bottom[0]) + std::abs(bottom[1]) + std::abs(bottom[2]) + std::abs(bottom[3] - 1.0) > tol) {
        throw ValidationError("camera pose bottom row must be (0, 0, 0, 1)");
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fov_x_radians)
{
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) {
        x = z.cross(std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
    }
    x.normalize();
    const Vec3 y = z.cross(x);   // points "down" in image space

    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * width / std::tan(0.5 * fov_x_radians);
    cam.fy = cam.fx;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = r;
    cam.world_to_cam.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

Mat4 to_opencv_pose(const Mat4& world_to_cam, CameraConvention from)
{
    if (from == CameraConvention::OpenCV) {
        return world_to_cam;
    }
    Mat4 flip = Mat4::Identity();
    flip(1, 1) = -1;
    flip(2, 2) = -1;
    return flip * world_to_cam;
}

namespace {

CameraConvention parse_convention(const json& j, CameraConvention fallback)
{
    if (!j.contains("convention")) {
        return fallback;
    }
    const auto s = j.at("convention").get<std::string>();
    if (s == "opencv") {
        return CameraConvention::OpenCV;
    }
    if (s == "opengl") {
        return CameraConvention::OpenGL;
    }
    throw FormatError("unknown camera convention '" + s + "' (expected opencv or opengl)");
}

Camera parse_camera(const json& j, CameraConvention convention, std::size_t index)
{
    const std::string where = "camera " + std::to_string(index) + ": ";
    Camera cam;
    try {
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(where + e.what());
    }
    if (!j.contains("world_to_cam") || !j.at("world_to_cam").is_array()) {
        throw FormatError(where + "missing world_to_cam array");
    }
    const auto& m = j.at("world_to_cam");
    if (m.size() != 16) {
        throw FormatError(where + "world_to_cam must have 16 entries, got " + std::to_string(m.size()));
    }
    Mat4 pose;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            pose(r, c) = m.at(4 * r + c).get<double>();
        }
    }
    cam.world_to_cam = to_opencv_pose(pose, parse_convention(j, convention));
    try {
        cam.validate(1e-4);
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    }
    return cam;
}

} // namespace

std::vector<Camera> parse_cameras(const std::string& json_text)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("camera file is not valid JSON: ") + e.what());
    }
    CameraConvention convention = CameraConvention::OpenCV;
    const json* list = &root;
    if (root.is_object()) {
        convention = parse_convention(root, convention);
        if (!root.contains("cameras")) {
            throw FormatError("camera object lacks a 'cameras' array");
        }
        list = &root.at("cameras");
    }
    if (!list->is_array()) {
        throw FormatError("camera file must contain a JSON array");
    }
    std::vector<Camera> cams;
    cams.reserve(list->size());
    for (std::size_t i = 0; i < list->size(); ++i) {
        cams.push_back(parse_camera(list->at(i), convention, i));
    }
    return cams;
}

std::vector<Camera> load_cameras(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open camera file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_cameras(ss.str());
}

std::string cameras_to_json(const std::vector<Camera>& cameras)
{
    json arr = json::array();
    for (const auto& cam : cameras) {
        json m = json::array();
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                m.push_back(cam.world_to_cam(r, c));
            }
        }
        arr.push_back({{"width", cam.width},
                       {"height", cam.height},
                       {"fx", cam.fx},
                       {"fy", cam.fy},
                       {"cx", cam.cx},
                       {"cy", cam.cy},
                       {"world_to_cam", m}});
    }
    return arr.dump(2);
}

void save_cameras(const std::vector<Camera>& cameras, const std::string& path)
{
    if (path.empty()) {
        throw IoError("empty output path for camera file");
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write camera file '" + path + "'");
    }
    out << cameras_to_json(cameras) << '\n';
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

} // namespace gausssurf
