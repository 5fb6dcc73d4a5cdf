#pragma once

#include "skelsim/geometry.hpp"
#include "skelsim/skeleton.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skelsim {

enum class BvhChannel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
};

std::string_view bvh_channel_name(BvhChannel c);

struct BvhJoint {
    std::string name;
    Vec3 offset;                            // meters (unit scale applied)
    std::vector<BvhChannel> channels;       // length 0, 3, or 6
    std::vector<BvhJoint> children;
    std::optional<Vec3> end_site_offset;    // meters
};

/// Parsed motion clip. Offsets and position-channel values are stored in
/// meters; rotation channels stay in degrees as the format declares them.
/// unit_scale remembers the factor applied at parse time so serialization
/// can emit the file's native units again.
struct BvhClip {
    BvhJoint root;
    double frame_time = 0.0;                // seconds per frame, > 0
    std::size_t channel_count = 0;          // row width
    std::vector<std::vector<double>> frames;
    double unit_scale = 0.01;

    std::size_t frame_count() const { return frames.size(); }
    double duration() const {
        return frames.empty() ? 0.0 : (static_cast<double>(frames.size()) - 1.0) * frame_time;
    }
};

/// Parses HIERARCHY/MOTION text. Lengths (offsets and position channels)
/// are multiplied by unit_scale; the common convention is centimeter files,
/// hence the 0.01 default. Throws ParseError with a line number for missing
/// sections, channel-count mismatches, non-numeric frame data, and
/// duplicate joint names.
BvhClip parse_bvh(const std::string& text, double unit_scale = 0.01);

/// Inverse of parse_bvh for the same unit scale: lengths are divided by
/// clip.unit_scale on output, and numbers are printed in their shortest
/// exact form, so parse(serialize(c)) reproduces c.
std::string serialize_bvh(const BvhClip& clip);

/// Joint positions (root frame of the clip) for one stored frame.
/// Each joint composes its parent transform with the offset translation and
/// its channel transforms in declared order; rotations are degrees.
std::map<std::string, Vec3> forward_kinematics(const BvhClip& clip,
                                               std::size_t frame_index);

/// Same kinematics on an interpolated channel row (used by sample_pose).
std::map<std::string, Vec3> forward_kinematics_row(const BvhClip& clip,
                                                   std::span<const double> row);

/// Linear per-channel interpolation between the bracketing frames, forward
/// kinematics, harmonization, and the world placement, in that order.
/// Throws std::out_of_range when t is outside [0, duration].
SkeletonPose sample_pose(const BvhClip& clip, double t,
                         const RigidTransform& world_from_root,
                         const HarmonizationMap& map);

} // namespace skelsim
