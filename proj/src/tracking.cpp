#include "skelsim/tracking.hpp"

#include "skelsim/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace skelsim {

Detection2D simulate_detection(const CameraModel& cam, const SkeletonPose& pose,
                               std::span<const Capsule> capsules, double sigma_px,
                               double p_miss, RngStream& rng) {
    if (sigma_px < 0.0) {
        throw std::invalid_argument("simulate_detection: sigma_px must be >= 0");
    }
    if (p_miss < 0.0 || p_miss >= 1.0) {
        throw std::invalid_argument("simulate_detection: p_miss must be in [0, 1)");
    }
    Detection2D det;
    det.camera_id = cam.id;
    for (const Joint j : all_joints()) {
        const auto& entry = pose[j];
        if (!entry.present) {
            continue;
        }
        const double margin = visibility_margin(j, capsules);
        if (!joint_visible(cam, entry.position, capsules, j, margin)) {
            continue;
        }
        if (p_miss > 0.0 && rng.chance(p_miss)) {
            continue;
        }
        const auto pix = project(cam, entry.position);
        auto& kp = det.keypoints[static_cast<std::size_t>(j)];
        kp.u = pix->u + rng.normal(0.0, sigma_px);
        kp.v = pix->v + rng.normal(0.0, sigma_px);
        kp.confidence = kDetectionConfidence;
        kp.detected = true;
    }
    return det;
}

CameraSkeletonEstimate lift_to_3d(const Detection2D& det, const CameraModel& cam,
                                  std::span<const Capsule> capsules, RngStream& rng,
                                  LiftMode mode, const SkeletonPose* truth) {
    if (det.camera_id != cam.id) {
        throw std::invalid_argument("lift_to_3d: detection from camera '" +
                                    det.camera_id + "' but model is '" + cam.id + "'");
    }
    if (mode == LiftMode::DirectDepth && truth == nullptr) {
        throw std::invalid_argument("lift_to_3d: direct depth mode needs the truth pose");
    }
    CameraSkeletonEstimate est;
    est.camera_id = det.camera_id;
    est.frame_id = det.frame_id;
    for (const Joint j : all_joints()) {
        const auto& kp = det.keypoints[static_cast<std::size_t>(j)];
        if (!kp.detected) {
            continue;
        }
        std::optional<double> z;
        if (mode == LiftMode::DepthLookup) {
            // The noisy keypoint may land off the silhouette or outside the
            // image entirely; both are background no-returns and the joint
            // goes missing, matching how depth lookup fails in practice.
            if (!in_image(cam.intrinsics, kp.u, kp.v)) {
                continue;
            }
            z = depth_at_pixel(cam, kp.u, kp.v, capsules, rng);
        } else {
            const auto& truth_entry = (*truth)[j];
            if (!truth_entry.present) {
                continue;
            }
            const auto pix = project(cam, truth_entry.position);
            if (!pix) {
                continue;
            }
            z = apply_depth_noise(cam.depth_noise, pix->z, rng);
        }
        if (!z) {
            continue;
        }
        auto& out = est.joints[static_cast<std::size_t>(j)];
        out.position = back_project(cam, kp.u, kp.v, *z);
        out.confidence = kp.confidence;
        out.present = true;
    }
    return est;
}

FusedSkeleton fuse_average(std::span<const CameraSkeletonEstimate> estimates,
                           double min_confidence) {
    if (estimates.empty()) {
        throw std::invalid_argument("fuse_average: no estimates");
    }
    FusedSkeleton fused;
    fused.frame_id = estimates.front().frame_id;
    for (const auto& est : estimates) {
        if (est.frame_id != fused.frame_id) {
            throw std::invalid_argument("fuse_average: mixed frame ids " +
                                        std::to_string(fused.frame_id) + " and " +
                                        std::to_string(est.frame_id));
        }
    }
    for (const Joint j : all_joints()) {
        const auto ji = static_cast<std::size_t>(j);
        Vec3 weighted_sum;
        Vec3 last_position;
        double weight = 0.0;
        int contributors = 0;
        for (const auto& est : estimates) {
            const auto& e = est.joints[ji];
            if (!e.present || e.confidence < min_confidence) {
                continue;
            }
            weighted_sum += e.position * e.confidence;
            weight += e.confidence;
            last_position = e.position;
            ++contributors;
        }
        if (contributors > 0) {
            auto& f = fused.joints[ji];
            // A lone contributor passes through exactly; the weighted mean
            // would otherwise pick up multiply/divide roundoff.
            f.position = contributors == 1 ? last_position : weighted_sum / weight;
            f.contributors = contributors;
            f.present = true;
        }
    }
    return fused;
}

TrackingMetrics evaluate_tracking(std::span<const TrackedFrame> frames) {
    if (frames.empty()) {
        throw std::invalid_argument("evaluate_tracking: no frames");
    }
    struct Accumulator {
        double sq_sum = 0.0;
        int overlap = 0;
        int present = 0;
        int truth_present = 0;
    };
    std::map<std::string, std::array<Accumulator, kJointCount>> acc;
    auto feed = [&](const std::string& source, std::size_t ji, bool present,
                    const Vec3& position, const SkeletonPose::Entry& truth) {
        auto& a = acc[source][ji];
        if (truth.present) {
            ++a.truth_present;
            if (present) {
                ++a.present;
                const double d2 = (position - truth.position).squared_norm();
                a.sq_sum += d2;
                ++a.overlap;
            }
        }
    };
    for (const TrackedFrame& frame : frames) {
        for (const Joint j : all_joints()) {
            const auto ji = static_cast<std::size_t>(j);
            const auto& truth = frame.truth[j];
            for (const auto& est : frame.per_camera) {
                const auto& e = est.joints[ji];
                feed(est.camera_id, ji, e.present, e.position, truth);
            }
            const auto& f = frame.fused.joints[ji];
            feed(kFusedSourceName, ji, f.present, f.position, truth);
        }
    }
    TrackingMetrics metrics;
    for (const auto& [source, joints] : acc) {
        auto& out = metrics.per_source[source];
        for (std::size_t ji = 0; ji < kJointCount; ++ji) {
            const Accumulator& a = joints[ji];
            JointSourceMetrics m;
            m.frames = a.truth_present;
            m.detection_rate =
                a.truth_present > 0
                    ? static_cast<double>(a.present) / static_cast<double>(a.truth_present)
                    : 0.0;
            if (a.overlap > 0) {
                m.rmse = std::sqrt(a.sq_sum / static_cast<double>(a.overlap));
            }
            out[ji] = m;
        }
    }
    return metrics;
}

TrackingRunResult run_tracking_experiment(const SceneConfig& scene,
                                          const MotionSource& motion, int threads) {
    if (scene.cameras.empty()) {
        throw std::invalid_argument("tracking experiment: scene has no cameras");
    }
    const auto frame_count = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(scene.frame_rate * scene.duration)));

    std::map<std::string, double> radii = default_capsule_radii();
    for (const auto& [category, radius] : scene.capsule_radii) {
        radii[category] = radius;
    }

    TrackingRunResult result;
    result.frames.resize(frame_count);
    parallel_for(frame_count, threads, [&](std::size_t f) {
        TrackedFrame frame;
        frame.frame_id = static_cast<int>(f);
        frame.t = static_cast<double>(f) / scene.frame_rate;
        frame.truth = motion.pose_at(frame.t);
        const std::vector<Capsule> capsules = build_capsules(frame.truth, radii);
        frame.per_camera.reserve(scene.cameras.size());
        for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
            const CameraModel& cam = scene.cameras[c];
            RngStream det_rng = derive_stream(scene.master_seed, "detect", f, c);
            Detection2D det = simulate_detection(cam, frame.truth, capsules,
                                                 scene.detector.sigma_px,
                                                 scene.detector.p_miss, det_rng);
            det.frame_id = frame.frame_id;
            RngStream lift_rng = derive_stream(scene.master_seed, "lift", f, c);
            frame.per_camera.push_back(lift_to_3d(det, cam, capsules, lift_rng,
                                                  scene.detector.lift_mode, &frame.truth));
        }
        frame.fused = fuse_average(frame.per_camera, scene.detector.min_confidence);
        result.frames[f] = std::move(frame);
    });

    result.metrics = evaluate_tracking(result.frames);
    return result;
}

} // namespace skelsim
