#include "skelsim/motion.hpp"

namespace skelsim {

MotionSource MotionSource::from_bvh(BvhClip clip, const RigidTransform& world_from_root,
                                    HarmonizationMap map) {
    MotionSource source;
    source.clip_ = std::make_shared<BvhClip>(std::move(clip));
    source.map_ = std::move(map);
    source.world_from_root_ = world_from_root;
    return source;
}

MotionSource MotionSource::synthesized(MotionKind kind,
                                       const RigidTransform& world_from_root) {
    MotionSource source;
    source.kind_ = kind;
    source.world_from_root_ = world_from_root;
    return source;
}

SkeletonPose MotionSource::pose_at(double t) const {
    if (clip_) {
        return sample_pose(*clip_, t, world_from_root_, map_);
    }
    SkeletonPose pose = synthetic_pose_at(*kind_, t);
    for (auto& entry : pose.joints) {
        if (entry.present) {
            entry.position = transform_point(world_from_root_, entry.position);
        }
    }
    return pose;
}

double MotionSource::max_time() const {
    if (clip_) {
        return clip_->duration();
    }
    return std::numeric_limits<double>::infinity();
}

std::vector<Vec3> MotionSource::reference_path() const {
    if (kind_ && *kind_ == MotionKind::WriteVico) {
        std::vector<Vec3> path = vico_polyline();
        for (Vec3& p : path) {
            p = transform_point(world_from_root_, p);
        }
        return path;
    }
    return {};
}

} // namespace skelsim
