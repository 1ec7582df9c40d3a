#include "gausssurf/common.hpp"

namespace gausssurf {

Mat3 quat_to_rotation(const Vec4& q_raw)
{
    const Vec4 q = q_raw.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Vec4 rotation_to_quat(const Mat3& r)
{
    Eigen::Quaterniond q(r);
    q.normalize();
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0) {
        out = -out;
    }
    return out;
}

Vec4 rotation_grad_to_quat(const Vec4& q_raw, const Mat3& dr)
{
    const double norm = q_raw.norm();
    const Vec4 q = q_raw / norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];

    Mat3 dw, dx, dy, dz;
    dw << 0, -z, y, z, 0, -x, -y, x, 0;
    dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;

    Vec4 dn(2 * (dw.cwiseProduct(dr)).sum(), 2 * (dx.cwiseProduct(dr)).sum(),
            2 * (dy.cwiseProduct(dr)).sum(), 2 * (dz.cwiseProduct(dr)).sum());
    // d(q/|q|)/dq = (I - n n^T) / |q|
    return (dn - q * q.dot(dn)) / norm;
}

bool normalize_quat(Vec4& q, double tol)
{
    const double n = q.norm();
    if (n < 1e-12) {
        q = Vec4(1, 0, 0, 0);
        return true;
    }
    if (std::abs(n - 1.0) > tol) {
        q /= n;
        return true;
    }
    return false;
}

} // namespace gausssurf
