#pragma once

#include "skelsim/camera.hpp"
#include "skelsim/motion.hpp"
#include "skelsim/rng.hpp"
#include "skelsim/scene.hpp"
#include "skelsim/skeleton.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skelsim {

/// Per-joint 2D keypoints from one camera in one frame (the detector
/// surrogate's output shape). confidence is zero exactly when undetected.
struct Detection2D {
    struct Keypoint {
        double u = 0.0;
        double v = 0.0;
        double confidence = 0.0;
        bool detected = false;
    };

    std::string camera_id;
    int frame_id = 0;
    std::array<Keypoint, kJointCount> keypoints{};
};

/// One camera's 3D skeleton estimate in world coordinates.
struct CameraSkeletonEstimate {
    struct JointEstimate {
        Vec3 position;
        double confidence = 0.0;
        bool present = false;
    };

    std::string camera_id;
    int frame_id = 0;
    std::array<JointEstimate, kJointCount> joints{};
};

struct FusedSkeleton {
    struct FusedJoint {
        Vec3 position;
        int contributors = 0;
        bool present = false;
    };

    int frame_id = 0;
    std::array<FusedJoint, kJointCount> joints{};
};

/// Accuracy summary per (source, joint); a source is one camera id or
/// "fused". rmse is absent when estimate and truth never overlap.
struct JointSourceMetrics {
    std::optional<double> rmse;   // meters
    double detection_rate = 0.0;  // present frames / truth-present frames
    int frames = 0;               // truth-present frames
};

struct TrackingMetrics {
    std::map<std::string, std::array<JointSourceMetrics, kJointCount>> per_source;
};

inline constexpr const char* kFusedSourceName = "fused";
inline constexpr double kDetectionConfidence = 0.8;

/// Detector surrogate: a present joint is reported unless it fails the
/// visibility test or a Bernoulli(p_miss) coin drops it; reported pixels are
/// the exact projection plus per-axis Gaussian jitter at constant
/// confidence 0.8.
Detection2D simulate_detection(const CameraModel& cam, const SkeletonPose& pose,
                               std::span<const Capsule> capsules, double sigma_px,
                               double p_miss, RngStream& rng);

/// 3D lift of the detections. DepthLookup reads scene depth through the
/// (noisy) pixel and drops the joint when the ray misses the body or the
/// pixel left the image; DirectDepth perturbs the true joint depth instead
/// (requires truth) and is the ablation mode. Throws std::invalid_argument
/// on camera-id mismatch or a missing truth pose in DirectDepth mode.
CameraSkeletonEstimate lift_to_3d(const Detection2D& det, const CameraModel& cam,
                                  std::span<const Capsule> capsules, RngStream& rng,
                                  LiftMode mode, const SkeletonPose* truth = nullptr);

/// Confidence-weighted mean over the estimates whose joint is present with
/// confidence >= min_confidence. Throws std::invalid_argument on mixed
/// frame ids or an empty input.
FusedSkeleton fuse_average(std::span<const CameraSkeletonEstimate> estimates,
                           double min_confidence);

/// Everything one frame produced, kept together for evaluation and logging.
struct TrackedFrame {
    int frame_id = 0;
    double t = 0.0;
    SkeletonPose truth;
    std::vector<CameraSkeletonEstimate> per_camera;
    FusedSkeleton fused;
};

/// Per-source, per-joint RMSE over frames where estimate and truth are both
/// present, plus detection rates. Throws std::invalid_argument on empty
/// input.
TrackingMetrics evaluate_tracking(std::span<const TrackedFrame> frames);

struct TrackingRunResult {
    std::vector<TrackedFrame> frames;
    TrackingMetrics metrics;
};

/// Steps the scene at frame_rate for duration: sample the actor, build
/// capsules, detect per camera, lift, fuse, evaluate. Fully determined by
/// the scene's master seed; frames may be processed on several threads.
TrackingRunResult run_tracking_experiment(const SceneConfig& scene,
                                          const MotionSource& motion, int threads = 1);

} // namespace skelsim
