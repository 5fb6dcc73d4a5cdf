#pragma once

#include "skelsim/camera.hpp"
#include "skelsim/geometry.hpp"
#include "skelsim/rng.hpp"
#include "skelsim/skeleton.hpp"
#include "skelsim/synth.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skelsim {

/// Swept-sphere body segment standing in for the avatar's volume; the
/// occluder primitive for visibility and depth queries. owner_joints lists
/// the canonical joints that live inside (or on) this capsule, which are
/// exempt from being occluded by it.
struct Capsule {
    Vec3 endpoint_a;
    Vec3 endpoint_b;
    double radius = 0.0;
    std::vector<Joint> owner_joints;

    bool owns(Joint j) const;
};

/// Rigid fiducial pattern used for calibration, points in the prop-local
/// frame. Planar props keep their points in the local z = 0 plane with +z
/// as the pattern normal.
struct CalibrationProp {
    std::vector<Vec3> fiducial_points;
    bool planar = false;
    std::string name;
};

/// Throws std::invalid_argument when the invariants fail: at least four
/// points, non-collinear, and coplanar (z = 0) when planar.
void validate_prop(const CalibrationProp& prop);

/// 0.3 m square with four corner fiducials (z = 0 plane, +z normal).
CalibrationProp planar_square_prop();

/// Asymmetric non-planar 8-point cluster inside a 0.4 m cube.
CalibrationProp cluster8_prop();

std::optional<CalibrationProp> prop_from_name(std::string_view name);

/// Fiducial pattern at a known world pose; fixes the world frame of an
/// otherwise relative calibration.
struct WorldAnchor {
    std::vector<Vec3> fiducial_points_local;
    std::vector<Vec3> fiducial_points_world;
    bool planar = false;
    RigidTransform world_from_anchor;
};

WorldAnchor make_world_anchor(const CalibrationProp& shape,
                              const RigidTransform& world_from_anchor);

/// Square marker of the given side length at the given pose.
WorldAnchor default_world_anchor(const RigidTransform& world_from_anchor,
                                 double size = 0.25);

/// Bone categories keyed by name; radii in meters, overridable per scene.
std::map<std::string, double> default_capsule_radii();

/// One capsule per configured bone whose two endpoint joints are present
/// (13 for a full pose). Radii come from the category table; categories
/// missing from the map fall back to the defaults.
std::vector<Capsule> build_capsules(const SkeletonPose& pose,
                                    const std::map<std::string, double>& radii);

/// Smallest t >= 0 where the ray point is exactly `radius` away from the
/// capsule axis segment, or nullopt on a miss. Starting inside yields the
/// exit distance. dir must be unit length within 1e-9.
std::optional<double> ray_capsule(const Vec3& origin, const Vec3& dir, const Capsule& c);

/// Half the radius of the largest capsule owning the joint: how far short
/// of the joint a ray is allowed to stop while still counting as "reached"
/// (the joint sits inside its own body segment).
double visibility_margin(Joint joint, std::span<const Capsule> capsules);

/// False when the joint projects behind the camera or outside the image;
/// otherwise casts camera-center -> joint and reports whether any capsule
/// not owning the joint blocks the ray more than `margin` short of it.
bool joint_visible(const CameraModel& cam, const Vec3& joint_world,
                   std::span<const Capsule> capsules, std::optional<Joint> joint_id,
                   double margin);

/// Camera-frame depth (z, meters) seen through a pixel: the nearest capsule
/// hit pushed through the camera's depth noise, or nullopt when nothing is
/// hit inside max_range. Throws std::out_of_range for pixels outside the
/// image.
std::optional<double> depth_at_pixel(const CameraModel& cam, double u, double v,
                                     std::span<const Capsule> capsules, RngStream& rng);

/// How a 2D detection is turned into a 3D point.
enum class LiftMode {
    DepthLookup, // read scene depth at the (noisy) pixel
    DirectDepth, // true joint depth plus depth noise (ablation)
};

std::string_view lift_mode_name(LiftMode mode);
std::optional<LiftMode> lift_mode_from_name(std::string_view name);

/// Detector surrogate parameters (pixel jitter, random misses) plus the
/// fusion gate.
struct DetectorParams {
    double sigma_px = 2.0;
    double p_miss = 0.02;
    double min_confidence = 0.1;
    LiftMode lift_mode = LiftMode::DepthLookup;
};

/// Declarative experiment description: everything a run needs, so that
/// (config, seed) fully determines every output byte.
struct SceneConfig {
    std::vector<CameraModel> cameras;

    // Actor: either a BVH clip on disk or a synthetic motion kind. BVH rigs
    // with naming schemes other than the built-in default supply their own
    // harmonization map file.
    std::optional<std::string> bvh_path;
    double bvh_unit_scale = 0.01;
    std::optional<std::string> harmonization_path;
    std::optional<MotionKind> synth_kind = MotionKind::Stand;
    RigidTransform world_from_root;

    CalibrationProp prop;
    WorldAnchor anchor;

    double frame_rate = 30.0; // Hz
    double duration = 1.0;    // seconds
    std::uint64_t master_seed = 0;

    std::map<std::string, double> capsule_radii; // category overrides
    DetectorParams detector;

    // Opaque appearance labels copied into dataset records.
    std::map<std::string, std::string> appearance;
};

} // namespace skelsim
