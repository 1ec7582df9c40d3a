#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace gausssurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Error hierarchy. Everything thrown by the library derives from Error so
// the CLI can map it to a runtime-error exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class EmptySceneError : public Error {
public:
    using Error::Error;
};

class EmptyCloudError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

// A loss or gradient went non-finite during optimization.
class TrainingError : public Error {
public:
    using Error::Error;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of the quaternion (w, x, y, z) after normalization.
Mat3 quat_to_rotation(const Vec4& q);

/// Rotation matrix -> unit quaternion (w, x, y, z) with w >= 0.
Vec4 rotation_to_quat(const Mat3& r);

/// Backpropagates dL/dR through R(q / |q|) onto the raw quaternion q.
Vec4 rotation_grad_to_quat(const Vec4& q, const Mat3& dr);

/// Normalizes q in place when its norm deviates from 1 by more than `tol`.
/// A zero quaternion becomes identity. Returns true if q was modified.
bool normalize_quat(Vec4& q, double tol = 1e-6);

} // namespace gausssurf
