#pragma once

#include "skelsim/geometry.hpp"
#include "skelsim/skeleton.hpp"

#include <string_view>
#include <vector>

namespace skelsim {

enum class MotionKind {
    Stand,
    WaveRightArm,
    WriteVico,
};

std::string_view motion_kind_name(MotionKind kind);

struct SynthParams {
    double duration = 1.0;     // seconds, > 0
    double sample_rate = 30.0; // Hz, > 0
};

struct SynthesizedMotion {
    std::vector<SkeletonPose> poses;
    /// Ground-truth wrist polyline for the writing motion; empty otherwise.
    std::vector<Vec3> reference_path;
};

/// Neutral standing pose with all 25 joints present. Feet on z = 0, facing
/// +x, right side toward -y.
SkeletonPose standing_pose();

/// The piecewise-linear wrist path spelling "VICO" in the x-z plane at the
/// writing offset (letters 0.2 m tall, 0.15 m wide, 0.05 m apart).
std::vector<Vec3> vico_polyline();

/// Arc length of the writing path divided by the writing speed (0.1 m/s):
/// the time the wrist needs to finish the word.
double vico_path_duration();

/// Pose of the synthetic actor at time t (root frame). Stand is constant;
/// the wave swings the right elbow/wrist across the face; the writing
/// motion moves the right wrist along the polyline at constant speed and
/// holds the final point afterwards.
SkeletonPose synthetic_pose_at(MotionKind kind, double t);

/// Samples synthetic_pose_at on the uniform grid k / sample_rate,
/// k = 0 .. round(duration * sample_rate) - 1. Throws std::invalid_argument
/// on non-positive duration or rate.
SynthesizedMotion synthesize_motion(MotionKind kind, const SynthParams& params);

} // namespace skelsim
