#include "skelsim/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skelsim {

namespace {

// Letter geometry: height 0.2 m, width 0.15 m, gap 0.05 m, wrist speed
// 0.1 m/s, all in the x-z plane at kWritingY. Sized for a standing reach
// envelope around chest height.
constexpr double kLetterHeight = 0.2;
constexpr double kLetterWidth = 0.15;
constexpr double kLetterGap = 0.05;
constexpr double kWritingSpeed = 0.1; // m/s
constexpr double kWritingY = -0.35;   // plane offset, right of the body
constexpr double kBaselineZ = 1.0;
constexpr double kStartX = -0.375; // centers the four letters on x = 0

constexpr double kWaveHz = 0.5;

Vec3 on_plane(double x, double z) {
    return {kStartX + x, kWritingY, kBaselineZ + z};
}

void append_arc(std::vector<Vec3>& path, double slot_x, double deg_from, double deg_to,
                double deg_step) {
    const double cx = slot_x + kLetterWidth / 2.0;
    const double cz = kLetterHeight / 2.0;
    const double rx = kLetterWidth / 2.0;
    const double rz = kLetterHeight / 2.0;
    for (double deg = deg_from;; deg += deg_step) {
        const double rad = deg * std::numbers::pi / 180.0;
        path.push_back(on_plane(cx + rx * std::cos(rad), cz + rz * std::sin(rad)));
        if ((deg_step > 0 && deg >= deg_to) || (deg_step < 0 && deg <= deg_to)) {
            break;
        }
    }
}

double polyline_length(const std::vector<Vec3>& path) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        total += (path[i] - path[i - 1]).norm();
    }
    return total;
}

Vec3 point_at_arc_length(const std::vector<Vec3>& path, double s) {
    if (s <= 0.0) {
        return path.front();
    }
    for (std::size_t i = 1; i < path.size(); ++i) {
        const double seg = (path[i] - path[i - 1]).norm();
        if (s <= seg) {
            return path[i - 1] + (path[i] - path[i - 1]) * (s / seg);
        }
        s -= seg;
    }
    return path.back();
}

} // namespace

std::string_view motion_kind_name(MotionKind kind) {
    switch (kind) {
    case MotionKind::Stand:
        return "stand";
    case MotionKind::WaveRightArm:
        return "wave_right_arm";
    case MotionKind::WriteVico:
        return "write_vico";
    }
    return "?";
}

SkeletonPose standing_pose() {
    SkeletonPose pose;
    pose.set(Joint::Nose, {0.13, 0.00, 1.63});
    pose.set(Joint::Neck, {0.00, 0.00, 1.50});
    pose.set(Joint::RShoulder, {0.00, -0.18, 1.46});
    pose.set(Joint::RElbow, {0.00, -0.22, 1.18});
    pose.set(Joint::RWrist, {0.00, -0.24, 0.93});
    pose.set(Joint::LShoulder, {0.00, 0.18, 1.46});
    pose.set(Joint::LElbow, {0.00, 0.22, 1.18});
    pose.set(Joint::LWrist, {0.00, 0.24, 0.93});
    pose.set(Joint::MidHip, {0.00, 0.00, 0.96});
    pose.set(Joint::RHip, {0.00, -0.10, 0.95});
    pose.set(Joint::RKnee, {0.00, -0.10, 0.52});
    pose.set(Joint::RAnkle, {0.00, -0.10, 0.09});
    pose.set(Joint::LHip, {0.00, 0.10, 0.95});
    pose.set(Joint::LKnee, {0.00, 0.10, 0.52});
    pose.set(Joint::LAnkle, {0.00, 0.10, 0.09});
    pose.set(Joint::REye, {0.08, -0.035, 1.66});
    pose.set(Joint::LEye, {0.08, 0.035, 1.66});
    pose.set(Joint::REar, {0.02, -0.075, 1.63});
    pose.set(Joint::LEar, {0.02, 0.075, 1.63});
    pose.set(Joint::RBigToe, {0.14, -0.08, 0.02});
    pose.set(Joint::RSmallToe, {0.12, -0.14, 0.02});
    pose.set(Joint::RHeel, {-0.05, -0.10, 0.02});
    pose.set(Joint::LBigToe, {0.14, 0.08, 0.02});
    pose.set(Joint::LSmallToe, {0.12, 0.14, 0.02});
    pose.set(Joint::LHeel, {-0.05, 0.10, 0.02});
    return pose;
}

std::vector<Vec3> vico_polyline() {
    std::vector<Vec3> path;
    const double w = kLetterWidth;
    const double h = kLetterHeight;
    const double slot = kLetterWidth + kLetterGap;

    // V
    path.push_back(on_plane(0.0, h));
    path.push_back(on_plane(w / 2.0, 0.0));
    path.push_back(on_plane(w, h));
    // I: single vertical stroke at the slot center
    path.push_back(on_plane(slot + w / 2.0, h));
    path.push_back(on_plane(slot + w / 2.0, 0.0));
    // C: open arc, gap facing right
    append_arc(path, 2.0 * slot, 60.0, 300.0, 30.0);
    // O: closed loop from the top
    append_arc(path, 3.0 * slot, 90.0, 450.0, 30.0);
    return path;
}

double vico_path_duration() {
    return polyline_length(vico_polyline()) / kWritingSpeed;
}

SkeletonPose synthetic_pose_at(MotionKind kind, double t) {
    SkeletonPose pose = standing_pose();
    pose.timestamp = t;
    switch (kind) {
    case MotionKind::Stand:
        break;
    case MotionKind::WaveRightArm: {
        const double phase = 2.0 * std::numbers::pi * kWaveHz * t;
        pose.set(Joint::RElbow,
                 {0.10, -0.24 + 0.03 * std::sin(phase), 1.46 + 0.02 * std::sin(phase)});
        pose.set(Joint::RWrist,
                 {0.17, -0.22 + 0.34 * std::sin(phase), 1.62 + 0.05 * std::cos(phase)});
        break;
    }
    case MotionKind::WriteVico: {
        static const std::vector<Vec3> path = vico_polyline();
        pose.set(Joint::RWrist, point_at_arc_length(path, kWritingSpeed * t));
        break;
    }
    }
    return pose;
}

SynthesizedMotion synthesize_motion(MotionKind kind, const SynthParams& params) {
    if (!(params.duration > 0.0)) {
        throw std::invalid_argument("synthesize_motion: duration must be positive");
    }
    if (!(params.sample_rate > 0.0)) {
        throw std::invalid_argument("synthesize_motion: sample rate must be positive");
    }
    const auto count = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(params.duration * params.sample_rate)));
    SynthesizedMotion out;
    out.poses.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        out.poses.push_back(
            synthetic_pose_at(kind, static_cast<double>(k) / params.sample_rate));
    }
    if (kind == MotionKind::WriteVico) {
        out.reference_path = vico_polyline();
    }
    return out;
}

} // namespace skelsim
