#include "skelsim/scene.hpp"

#include "skelsim/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace skelsim {

namespace {

struct BoneSpec {
    const char* category;
    Joint a;
    Joint b;
    std::initializer_list<Joint> owners;
};

// 13 bones; facial joints belong to the head capsule and the hip triple to
// the pelvis bar so self-occlusion margins apply to them.
const std::array<BoneSpec, 13> kBones = {{
    {"torso", Joint::Neck, Joint::MidHip,
     {Joint::Neck, Joint::MidHip, Joint::RHip, Joint::LHip}},
    {"head", Joint::Neck, Joint::Nose,
     {Joint::Neck, Joint::Nose, Joint::REye, Joint::LEye, Joint::REar, Joint::LEar}},
    {"pelvis", Joint::RHip, Joint::LHip, {Joint::RHip, Joint::LHip, Joint::MidHip}},
    {"clavicle", Joint::Neck, Joint::RShoulder, {Joint::Neck, Joint::RShoulder}},
    {"clavicle", Joint::Neck, Joint::LShoulder, {Joint::Neck, Joint::LShoulder}},
    {"upper_arm", Joint::RShoulder, Joint::RElbow, {Joint::RShoulder, Joint::RElbow}},
    {"upper_arm", Joint::LShoulder, Joint::LElbow, {Joint::LShoulder, Joint::LElbow}},
    {"forearm", Joint::RElbow, Joint::RWrist, {Joint::RElbow, Joint::RWrist}},
    {"forearm", Joint::LElbow, Joint::LWrist, {Joint::LElbow, Joint::LWrist}},
    {"thigh", Joint::RHip, Joint::RKnee, {Joint::RHip, Joint::RKnee, Joint::MidHip}},
    {"thigh", Joint::LHip, Joint::LKnee, {Joint::LHip, Joint::LKnee, Joint::MidHip}},
    {"shin", Joint::RKnee, Joint::RAnkle, {Joint::RKnee, Joint::RAnkle}},
    {"shin", Joint::LKnee, Joint::LAnkle, {Joint::LKnee, Joint::LAnkle}},
}};

// Quadratic roots of |o + t d - c|^2 = r^2.
bool sphere_roots(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius,
                  double& t0, double& t1) {
    const Vec3 oc = origin - center;
    const double b = 2.0 * oc.dot(dir);
    const double c = oc.squared_norm() - radius * radius;
    const double disc = b * b - 4.0 * c; // a == 1 for unit dir
    if (disc < 0.0) {
        return false;
    }
    const double s = std::sqrt(disc);
    t0 = (-b - s) / 2.0;
    t1 = (-b + s) / 2.0;
    return true;
}

} // namespace

bool Capsule::owns(Joint j) const {
    return std::find(owner_joints.begin(), owner_joints.end(), j) != owner_joints.end();
}

void validate_prop(const CalibrationProp& prop) {
    if (prop.fiducial_points.size() < 4) {
        throw std::invalid_argument("prop '" + prop.name + "' needs at least 4 fiducials");
    }
    for (const Vec3& p : prop.fiducial_points) {
        if (!p.finite()) {
            throw std::invalid_argument("prop '" + prop.name + "' has a non-finite point");
        }
        if (prop.planar && std::abs(p.z) > 1e-9) {
            throw std::invalid_argument("prop '" + prop.name +
                                        "' is declared planar but leaves the z=0 plane");
        }
    }
    // Collinearity: the largest cross product over point pairs relative to
    // the first point must be meaningfully non-zero.
    const Vec3& p0 = prop.fiducial_points.front();
    double best = 0.0;
    for (std::size_t i = 1; i < prop.fiducial_points.size(); ++i) {
        for (std::size_t j = i + 1; j < prop.fiducial_points.size(); ++j) {
            const Vec3 a = prop.fiducial_points[i] - p0;
            const Vec3 b = prop.fiducial_points[j] - p0;
            best = std::max(best, a.cross(b).norm());
        }
    }
    if (best < 1e-12) {
        throw std::invalid_argument("prop '" + prop.name + "' fiducials are collinear");
    }
}

CalibrationProp planar_square_prop() {
    CalibrationProp prop;
    prop.name = "planar_square";
    prop.planar = true;
    prop.fiducial_points = {
        {-0.15, -0.15, 0.0},
        {0.15, -0.15, 0.0},
        {0.15, 0.15, 0.0},
        {-0.15, 0.15, 0.0},
    };
    validate_prop(prop);
    return prop;
}

CalibrationProp cluster8_prop() {
    CalibrationProp prop;
    prop.name = "cluster8";
    prop.planar = false;
    prop.fiducial_points = {
        {0.18, 0.05, 0.03},   {-0.15, 0.12, -0.08}, {0.02, -0.17, 0.11},
        {-0.07, -0.04, -0.16}, {0.13, 0.16, 0.14},  {-0.18, -0.13, 0.06},
        {0.08, -0.09, -0.12}, {-0.03, 0.14, -0.02},
    };
    validate_prop(prop);
    return prop;
}

std::optional<CalibrationProp> prop_from_name(std::string_view name) {
    if (name == "planar_square") {
        return planar_square_prop();
    }
    if (name == "cluster8") {
        return cluster8_prop();
    }
    return std::nullopt;
}

WorldAnchor make_world_anchor(const CalibrationProp& shape,
                              const RigidTransform& world_from_anchor) {
    validate_prop(shape);
    WorldAnchor anchor;
    anchor.fiducial_points_local = shape.fiducial_points;
    anchor.planar = shape.planar;
    anchor.world_from_anchor = world_from_anchor;
    anchor.fiducial_points_world.reserve(shape.fiducial_points.size());
    for (const Vec3& p : shape.fiducial_points) {
        anchor.fiducial_points_world.push_back(transform_point(world_from_anchor, p));
    }
    return anchor;
}

WorldAnchor default_world_anchor(const RigidTransform& world_from_anchor, double size) {
    CalibrationProp marker;
    marker.name = "anchor_marker";
    marker.planar = true;
    const double h = size / 2.0;
    marker.fiducial_points = {
        {-h, -h, 0.0},
        {h, -h, 0.0},
        {h, h, 0.0},
        {-h, h, 0.0},
    };
    return make_world_anchor(marker, world_from_anchor);
}

std::map<std::string, double> default_capsule_radii() {
    return {
        {"head", 0.11},    {"torso", 0.15}, {"pelvis", 0.08}, {"clavicle", 0.05},
        {"upper_arm", 0.05}, {"forearm", 0.045}, {"thigh", 0.08}, {"shin", 0.06},
    };
}

std::vector<Capsule> build_capsules(const SkeletonPose& pose,
                                    const std::map<std::string, double>& radii) {
    const auto defaults = default_capsule_radii();
    std::vector<Capsule> out;
    out.reserve(kBones.size());
    for (const BoneSpec& bone : kBones) {
        const auto& a = pose[bone.a];
        const auto& b = pose[bone.b];
        if (!a.present || !b.present) {
            continue;
        }
        auto it = radii.find(bone.category);
        const double radius = it != radii.end() ? it->second : defaults.at(bone.category);
        Capsule c;
        c.endpoint_a = a.position;
        c.endpoint_b = b.position;
        c.radius = radius;
        c.owner_joints.assign(bone.owners.begin(), bone.owners.end());
        out.push_back(std::move(c));
    }
    return out;
}

std::optional<double> ray_capsule(const Vec3& origin, const Vec3& dir, const Capsule& c) {
    if (std::abs(dir.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("ray_capsule: direction must be unit length");
    }
    const Vec3 axis = c.endpoint_b - c.endpoint_a;
    const double axis_len2 = axis.squared_norm();
    double best = std::numeric_limits<double>::infinity();

    auto consider_sphere = [&](const Vec3& center, bool cap_a) {
        double t0 = 0.0, t1 = 0.0;
        if (!sphere_roots(origin, dir, center, c.radius, t0, t1)) {
            return;
        }
        for (const double t : {t0, t1}) {
            if (t < 0.0 || t >= best) {
                continue;
            }
            if (axis_len2 < 1e-18) {
                best = t; // degenerate capsule: plain sphere
                continue;
            }
            // Accept only if the closest axis point of the hit is this cap.
            const double s = (origin + dir * t - c.endpoint_a).dot(axis) / axis_len2;
            if ((cap_a && s <= 0.0) || (!cap_a && s >= 1.0)) {
                best = t;
            }
        }
    };

    if (axis_len2 >= 1e-18) {
        // Cylinder body: components perpendicular to the axis.
        const Vec3 ao = origin - c.endpoint_a;
        const double m = dir.dot(axis) / axis_len2;
        const double n = ao.dot(axis) / axis_len2;
        const Vec3 q = dir - axis * m;
        const Vec3 r = ao - axis * n;
        const double qa = q.squared_norm();
        const double qb = 2.0 * q.dot(r);
        const double qc = r.squared_norm() - c.radius * c.radius;
        if (qa > 1e-18) {
            const double disc = qb * qb - 4.0 * qa * qc;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                for (const double t : {(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)}) {
                    if (t < 0.0 || t >= best) {
                        continue;
                    }
                    const double s = m * t + n;
                    if (s >= 0.0 && s <= 1.0) {
                        best = t;
                    }
                }
            }
        }
    }
    consider_sphere(c.endpoint_a, true);
    consider_sphere(c.endpoint_b, false);

    if (std::isinf(best)) {
        return std::nullopt;
    }
    return best;
}

double visibility_margin(Joint joint, std::span<const Capsule> capsules) {
    double largest = 0.0;
    for (const Capsule& c : capsules) {
        if (c.owns(joint)) {
            largest = std::max(largest, c.radius);
        }
    }
    return 0.5 * largest;
}

bool joint_visible(const CameraModel& cam, const Vec3& joint_world,
                   std::span<const Capsule> capsules, std::optional<Joint> joint_id,
                   double margin) {
    const auto pix = project(cam, joint_world);
    if (!pix || !in_image(cam.intrinsics, pix->u, pix->v)) {
        return false;
    }
    const Vec3 center = cam.world_from_camera.translation;
    const Vec3 gap = joint_world - center;
    const double distance = gap.norm();
    if (distance < 1e-12) {
        return true;
    }
    const Vec3 dir = gap / distance;
    for (const Capsule& c : capsules) {
        if (joint_id && c.owns(*joint_id)) {
            continue;
        }
        const auto hit = ray_capsule(center, dir, c);
        if (hit && *hit < distance - margin) {
            return false;
        }
    }
    return true;
}

std::optional<double> depth_at_pixel(const CameraModel& cam, double u, double v,
                                     std::span<const Capsule> capsules, RngStream& rng) {
    if (!in_image(cam.intrinsics, u, v)) {
        throw std::out_of_range("depth_at_pixel: pixel outside the image");
    }
    const Vec3 dir_cam = Vec3{(u - cam.intrinsics.cx) / cam.intrinsics.fx,
                              (v - cam.intrinsics.cy) / cam.intrinsics.fy, 1.0}
                             .normalized();
    const Vec3 dir_world = cam.world_from_camera.rotation.rotate(dir_cam);
    const Vec3 origin = cam.world_from_camera.translation;
    double nearest = std::numeric_limits<double>::infinity();
    for (const Capsule& c : capsules) {
        const auto hit = ray_capsule(origin, dir_world, c);
        if (hit && *hit < nearest) {
            nearest = *hit;
        }
    }
    if (std::isinf(nearest)) {
        return std::nullopt;
    }
    const double z = nearest * dir_cam.z; // camera-frame depth of the hit
    if (z <= 0.0) {
        return std::nullopt;
    }
    return apply_depth_noise(cam.depth_noise, z, rng);
}

std::string_view lift_mode_name(LiftMode mode) {
    return mode == LiftMode::DepthLookup ? "depth_lookup" : "direct_depth";
}

std::optional<LiftMode> lift_mode_from_name(std::string_view name) {
    if (name == "depth_lookup") {
        return LiftMode::DepthLookup;
    }
    if (name == "direct_depth") {
        return LiftMode::DirectDepth;
    }
    return std::nullopt;
}

} // namespace skelsim
