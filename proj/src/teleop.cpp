#include "skelsim/teleop.hpp"

#include "skelsim/errors.hpp"
#include "skelsim/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skelsim {

namespace {

double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squared_norm();
    if (len2 < 1e-18) {
        return (p - a).norm();
    }
    const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + ab * s)).norm();
}

double distance_to_polyline(const Vec3& p, const std::vector<Vec3>& path) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < path.size(); ++i) {
        best = std::min(best, distance_to_segment(p, path[i - 1], path[i]));
    }
    return best;
}

} // namespace

Vec3 hand_displacement(const SkeletonPose& current, const SkeletonPose& initial) {
    const auto& now = current[Joint::RWrist];
    const auto& then = initial[Joint::RWrist];
    if (!now.present || !then.present) {
        throw std::invalid_argument("hand_displacement: right wrist absent");
    }
    return now.position - then.position;
}

Vec3 desired_pose(const Vec3& ee_initial, const Vec3& displacement, double scale) {
    if (!(scale > 0.0)) {
        throw std::invalid_argument("desired_pose: scale must be positive");
    }
    return ee_initial + displacement * scale;
}

EndEffectorState impedance_step(const EndEffectorState& state, const Vec3& desired,
                                const ImpedanceParams& params, double dt) {
    if (!(dt > 0.0) || dt > 0.01) {
        throw std::invalid_argument("impedance_step: dt must lie in (0, 0.01]");
    }
    const Vec3 accel = (params.stiffness * (desired - state.position) -
                        params.damping * state.velocity) /
                       params.mass;
    EndEffectorState next;
    next.velocity = state.velocity + accel * dt;
    next.position = state.position + next.velocity * dt;
    next.time = state.time + dt;
    return next;
}

std::string_view dropout_policy_name(DropoutPolicy p) {
    switch (p) {
    case DropoutPolicy::HoldLast:
        return "hold";
    case DropoutPolicy::Freeze:
        return "freeze";
    case DropoutPolicy::Abort:
        return "abort";
    }
    return "?";
}

std::optional<DropoutPolicy> dropout_policy_from_name(std::string_view name) {
    if (name == "hold") {
        return DropoutPolicy::HoldLast;
    }
    if (name == "freeze") {
        return DropoutPolicy::Freeze;
    }
    if (name == "abort") {
        return DropoutPolicy::Abort;
    }
    return std::nullopt;
}

TeleopResult run_teleop_experiment(const SceneConfig& scene, const MotionSource& motion,
                                   const TeleopParams& params) {
    if (scene.cameras.empty()) {
        throw std::invalid_argument("teleop experiment: scene has no cameras");
    }
    const CameraModel& cam = scene.cameras.front();

    const std::vector<Vec3> reference = motion.reference_path();
    if (reference.empty()) {
        throw std::invalid_argument("teleop experiment: actor motion has no reference "
                                    "path (expected the writing motion)");
    }

    std::map<std::string, double> radii = default_capsule_radii();
    for (const auto& [category, radius] : scene.capsule_radii) {
        radii[category] = radius;
    }

    const auto frame_count = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(scene.frame_rate * scene.duration)));
    const double frame_dt = 1.0 / scene.frame_rate;
    const int substeps = std::max(
        1, static_cast<int>(std::ceil(params.substep_rate / scene.frame_rate)));
    const double sub_dt = frame_dt / substeps;

    TeleopResult result;
    result.frames = static_cast<int>(frame_count);

    EndEffectorState ee;
    ee.position = params.ee_home;
    Vec3 desired = params.ee_home;

    std::optional<Vec3> wrist_initial;      // estimate; drives the control loop
    std::optional<Vec3> wrist_initial_true; // ground truth; anchors the metric
    TeleopTrace& trace = result.trace;
    trace.samples.reserve(frame_count);

    for (std::size_t f = 0; f < frame_count; ++f) {
        const double t = static_cast<double>(f) / scene.frame_rate;
        const SkeletonPose truth = motion.pose_at(t);
        const std::vector<Capsule> capsules = build_capsules(truth, radii);

        RngStream det_rng = derive_stream(scene.master_seed, "teleop-detect", f);
        Detection2D det = simulate_detection(cam, truth, capsules, scene.detector.sigma_px,
                                             scene.detector.p_miss, det_rng);
        det.frame_id = static_cast<int>(f);
        RngStream lift_rng = derive_stream(scene.master_seed, "teleop-lift", f);
        const CameraSkeletonEstimate est =
            lift_to_3d(det, cam, capsules, lift_rng, scene.detector.lift_mode, &truth);
        const auto& wrist = est.joints[static_cast<std::size_t>(Joint::RWrist)];

        if (!wrist_initial) {
            if (wrist.present) {
                wrist_initial = wrist.position;
                wrist_initial_true = truth[Joint::RWrist].position;
            } else if (t > params.startup_window) {
                throw FramingError(
                    "right wrist never acquired during the startup window; "
                    "the camera framing cannot support teleoperation");
            }
        } else if (wrist.present) {
            desired =
                desired_pose(params.ee_home, wrist.position - *wrist_initial, params.scale);
        } else {
            ++result.dropout_frames;
            switch (params.dropout) {
            case DropoutPolicy::HoldLast:
                break; // keep previous desired
            case DropoutPolicy::Freeze:
                desired = ee.position;
                break;
            case DropoutPolicy::Abort:
                throw FramingError("tracked wrist lost mid-run (abort policy)");
            }
        }

        for (int s = 0; s < substeps; ++s) {
            ee = impedance_step(ee, desired, params.impedance, sub_dt);
        }
        trace.samples.push_back({t + frame_dt, desired, ee.position});
    }

    if (!wrist_initial) {
        throw FramingError("right wrist never acquired; the run is shorter than the "
                           "startup window");
    }
    // The end effector starts at home, so the reference is the wrist path
    // shifted by (home - wrist at acquisition). The ground-truth wrist
    // anchors the shift: the constant sensing bias then shows up in the
    // metric only through its drift, not as a fixed floor under every run.
    const Vec3 offset = params.ee_home - *wrist_initial_true;
    trace.reference_path.reserve(reference.size());
    for (const Vec3& p : reference) {
        trace.reference_path.push_back(p + offset);
    }
    double sq_sum = 0.0;
    for (const TeleopSample& sample : trace.samples) {
        const double d = distance_to_polyline(sample.actual, trace.reference_path);
        sq_sum += d * d;
    }
    result.path_rmse = std::sqrt(sq_sum / static_cast<double>(trace.samples.size()));
    return result;
}

} // namespace skelsim
