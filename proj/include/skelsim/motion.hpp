#pragma once

#include "skelsim/bvh.hpp"
#include "skelsim/skeleton.hpp"
#include "skelsim/synth.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace skelsim {

/// Uniform handle over the two actor motion sources a scene can declare:
/// a parsed BVH clip or a synthetic generator. Poses come out in world
/// coordinates (the root placement is applied here).
class MotionSource {
public:
    static MotionSource from_bvh(BvhClip clip, const RigidTransform& world_from_root,
                                 HarmonizationMap map);
    static MotionSource synthesized(MotionKind kind, const RigidTransform& world_from_root);

    SkeletonPose pose_at(double t) const;

    /// Largest valid sample time; synthetic motions are unbounded.
    double max_time() const;

    /// World-frame wrist reference path for the writing motion; empty for
    /// everything else.
    std::vector<Vec3> reference_path() const;

private:
    MotionSource() = default;

    std::shared_ptr<const BvhClip> clip_;
    HarmonizationMap map_;
    std::optional<MotionKind> kind_;
    RigidTransform world_from_root_;
};

} // namespace skelsim
