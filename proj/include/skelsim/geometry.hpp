#pragma once

#include <array>
#include <cmath>
#include <span>

namespace skelsim {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }

    /// Unit vector in the same direction. Throws DegenerateGeometryError on
    /// (near-)zero input.
    Vec3 normalized() const;

    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Unit quaternion, canonicalized to w >= 0 so each rotation has one
/// representation despite the double cover.
struct Rotation {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Rotation() = default;

    static Rotation identity() { return {}; }

    /// Normalizes and canonicalizes. Throws DegenerateGeometryError if the
    /// quaternion norm is too small to normalize meaningfully.
    static Rotation from_quaternion(double w, double x, double y, double z);

    /// axis need not be unit length; angle in radians.
    static Rotation from_axis_angle(const Vec3& axis, double angle);

    static Rotation rot_x(double angle) { return from_axis_angle({1, 0, 0}, angle); }
    static Rotation rot_y(double angle) { return from_axis_angle({0, 1, 0}, angle); }
    static Rotation rot_z(double angle) { return from_axis_angle({0, 0, 1}, angle); }

    /// Nearest rotation to a row-major 3x3 matrix (polar projection).
    static Rotation from_matrix(const std::array<double, 9>& m);

    Vec3 rotate(const Vec3& v) const;
    Rotation operator*(const Rotation& o) const;
    Rotation inverse() const { return canonicalized(w, -x, -y, -z); }

    double dot(const Rotation& o) const {
        return w * o.w + x * o.x + y * o.y + z * o.z;
    }

    /// Row-major 3x3 matrix.
    std::array<double, 9> matrix() const;

    /// Rotation angle in [0, pi].
    double angle() const;

private:
    static Rotation canonicalized(double w, double x, double y, double z);
};

/// SE(3) pose: p -> R * p + t, translation in meters.
struct RigidTransform {
    Rotation rotation;
    Vec3 translation;

    static RigidTransform identity() { return {}; }
    static RigidTransform translate(const Vec3& t) { return {Rotation::identity(), t}; }
    static RigidTransform rotate(const Rotation& r) { return {r, Vec3{}}; }
};

/// Deviation between two poses: Euclidean translation gap plus geodesic
/// rotation angle.
struct PoseError {
    double translation_error = 0.0; // meters
    double rotation_error = 0.0;    // radians, in [0, pi]
};

/// result maps p to a(b(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

RigidTransform invert(const RigidTransform& t);

Vec3 transform_point(const RigidTransform& t, const Vec3& p);

/// Geodesic distance on SO(3) in radians, clamped to [0, pi].
double geodesic_angle(const Rotation& a, const Rotation& b);

/// Chordal (quaternion eigen) mean: the maximizer of sum((q . q_i)^2) over
/// unit quaternions, i.e. the principal eigenvector of sum(q_i q_i^T).
/// Invariant to per-element sign flips. Throws on empty input.
Rotation chordal_mean_rotation(std::span<const Rotation> rotations);

/// World-from-camera pose with the camera +Z axis pointing from eye toward
/// target and +Y aligned against up (+Z forward, +X right, +Y down).
/// Throws DegenerateGeometryError when up is parallel to the gaze direction
/// or eye == target.
RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

} // namespace skelsim
