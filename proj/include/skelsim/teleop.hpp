#pragma once

#include "skelsim/geometry.hpp"
#include "skelsim/motion.hpp"
#include "skelsim/scene.hpp"
#include "skelsim/skeleton.hpp"

#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

namespace skelsim {

/// Mass-spring-damper rendering of the end effector (isotropic gains).
struct ImpedanceParams {
    double mass = 1.0;       // kg
    double stiffness = 500.0; // N/m
    double damping = 2.0 * std::sqrt(500.0); // N s/m, critical by default

    static ImpedanceParams critically_damped(double mass, double stiffness) {
        ImpedanceParams p;
        p.mass = mass;
        p.stiffness = stiffness;
        p.damping = 2.0 * std::sqrt(stiffness * mass);
        return p;
    }
};

struct EndEffectorState {
    Vec3 position;
    Vec3 velocity;
    double time = 0.0; // seconds
};

struct TeleopSample {
    double t = 0.0;
    Vec3 desired;
    Vec3 actual;
};

struct TeleopTrace {
    std::vector<TeleopSample> samples;       // strictly increasing t
    std::vector<Vec3> reference_path;        // offset wrist polyline
};

/// Tracked right-wrist displacement between two poses. Throws
/// std::invalid_argument when the wrist is absent in either.
Vec3 hand_displacement(const SkeletonPose& current, const SkeletonPose& initial);

/// Equilibrium target: initial end-effector position plus the scaled
/// displacement. scale must be positive.
Vec3 desired_pose(const Vec3& ee_initial, const Vec3& displacement, double scale);

/// One semi-implicit Euler step of the impedance dynamics:
///   a  = (k (desired - x) - d v) / m
///   v' = v + a dt,  x' = x + v' dt
/// dt must lie in (0, 0.01] (explicit-scheme stability budget).
EndEffectorState impedance_step(const EndEffectorState& state, const Vec3& desired,
                                const ImpedanceParams& params, double dt);

/// What to do when the tracked wrist drops out mid-run.
enum class DropoutPolicy {
    HoldLast, // keep the last desired pose (default)
    Freeze,   // re-anchor the desired pose to the current end-effector position
    Abort,    // give up with an error
};

std::string_view dropout_policy_name(DropoutPolicy p);
std::optional<DropoutPolicy> dropout_policy_from_name(std::string_view name);

struct TeleopParams {
    ImpedanceParams impedance;
    double scale = 1.0;
    DropoutPolicy dropout = DropoutPolicy::HoldLast;
    Vec3 ee_home{0.5, 0.5, 1.0};
    double substep_rate = 1000.0; // Hz, controller integration between frames
    double startup_window = 1.0;  // seconds to first wrist acquisition
};

struct TeleopResult {
    TeleopTrace trace;
    double path_rmse = 0.0; // meters, actual path vs offset reference polyline
    int dropout_frames = 0;
    int frames = 0;
};

/// Full writing-task loop with a single camera: per sensing frame, detect
/// and lift the skeleton, convert the wrist displacement into the desired
/// equilibrium pose (dropout policy applies), and integrate the impedance
/// dynamics at the sub-step rate in between. The reported RMSE compares the
/// end-effector path against the wrist reference polyline shifted by
/// (ee_home - initial wrist estimate). Throws FramingError when the wrist
/// is never acquired inside the startup window.
TeleopResult run_teleop_experiment(const SceneConfig& scene, const MotionSource& motion,
                                   const TeleopParams& params);

} // namespace skelsim
