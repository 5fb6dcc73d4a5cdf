#include "skelsim/geometry.hpp"

#include "skelsim/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>

namespace skelsim {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

Vec3 Vec3::normalized() const {
    const double n = norm();
    if (n < kDegenerateNorm) {
        throw DegenerateGeometryError("cannot normalize near-zero vector");
    }
    return *this / n;
}

Rotation Rotation::canonicalized(double w, double x, double y, double z) {
    if (w < 0.0 || (w == 0.0 && (x < 0.0 || (x == 0.0 && (y < 0.0 || (y == 0.0 && z < 0.0)))))) {
        w = -w;
        x = -x;
        y = -y;
        z = -z;
    }
    Rotation r;
    r.w = w;
    r.x = x;
    r.y = y;
    r.z = z;
    return r;
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n < kDegenerateNorm) {
        throw DegenerateGeometryError("cannot normalize near-zero quaternion");
    }
    return canonicalized(w / n, x / n, y / n, z / n);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 u = axis.normalized();
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return canonicalized(std::cos(h), u.x * s, u.y * s, u.z * s);
}

Vec3 Rotation::rotate(const Vec3& v) const {
    // v' = v + 2 w (u x v) + 2 (u x (u x v)) with u the vector part.
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
}

Rotation Rotation::operator*(const Rotation& o) const {
    return canonicalized(w * o.w - x * o.x - y * o.y - z * o.z,
                         w * o.x + x * o.w + y * o.z - z * o.y,
                         w * o.y - x * o.z + y * o.w + z * o.x,
                         w * o.z + x * o.y - y * o.x + z * o.w);
}

std::array<double, 9> Rotation::matrix() const {
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, xz = x * z, yz = y * z;
    const double wx = w * x, wy = w * y, wz = w * z;
    return {1 - 2 * (yy + zz), 2 * (xy - wz),     2 * (xz + wy),
            2 * (xy + wz),     1 - 2 * (xx + zz), 2 * (yz - wx),
            2 * (xz - wy),     2 * (yz + wx),     1 - 2 * (xx + yy)};
}

Rotation Rotation::from_matrix(const std::array<double, 9>& m) {
    Eigen::Matrix3d em;
    em << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
    // Polar projection absorbs small non-orthogonality from upstream solvers.
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    const Eigen::Quaterniond q(r);
    return from_quaternion(q.w(), q.x(), q.y(), q.z());
}

double Rotation::angle() const {
    // |q| = 1 and w >= 0, so angle = 2 atan2(|vec|, w) lies in [0, pi].
    const double v = std::sqrt(x * x + y * y + z * z);
    return 2.0 * std::atan2(v, w);
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.translation + a.rotation.rotate(b.translation)};
}

RigidTransform invert(const RigidTransform& t) {
    const Rotation inv = t.rotation.inverse();
    return {inv, inv.rotate(-t.translation)};
}

Vec3 transform_point(const RigidTransform& t, const Vec3& p) {
    return t.rotation.rotate(p) + t.translation;
}

double geodesic_angle(const Rotation& a, const Rotation& b) {
    // Equivalent to arccos((trace(Ra^T Rb) - 1) / 2) but evaluated through
    // the relative quaternion with atan2, which keeps full precision near 0
    // and near pi where acos degrades.
    const Rotation rel = a.inverse() * b;
    return rel.angle();
}

Rotation chordal_mean_rotation(std::span<const Rotation> rotations) {
    if (rotations.empty()) {
        throw std::invalid_argument("chordal_mean_rotation: empty input");
    }
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    for (const Rotation& r : rotations) {
        Eigen::Vector4d q(r.w, r.x, r.y, r.z);
        m += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(m);
    const Eigen::Vector4d q = solver.eigenvectors().col(3); // largest eigenvalue
    return Rotation::from_quaternion(q(0), q(1), q(2), q(3));
}

RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 gaze = target - eye;
    if (gaze.norm() < kDegenerateNorm) {
        throw DegenerateGeometryError("look_at: eye equals target");
    }
    const Vec3 forward = gaze.normalized();
    const Vec3 side = forward.cross(up);
    if (side.norm() < 1e-9) {
        throw DegenerateGeometryError("look_at: up is parallel to the gaze direction");
    }
    const Vec3 right = side.normalized();
    const Vec3 down = forward.cross(right);
    // Columns are the camera axes expressed in world coordinates.
    const std::array<double, 9> m{right.x, down.x, forward.x,
                                  right.y, down.y, forward.y,
                                  right.z, down.z, forward.z};
    return {Rotation::from_matrix(m), eye};
}

} // namespace skelsim
