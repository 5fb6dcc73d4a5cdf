#pragma once

#include "skelsim/camera.hpp"
#include "skelsim/geometry.hpp"
#include "skelsim/rng.hpp"
#include "skelsim/scene.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace skelsim {

/// One detected fiducial corner: which camera saw which pattern point in
/// which (synchronized) frame, and where.
struct FiducialObservation {
    int frame_id = 0;
    std::string camera_id;
    int point_id = 0; // index into the pattern's fiducial list
    double u = 0.0;
    double v = 0.0;
};

struct PnpSolution {
    RigidTransform camera_from_prop;
    double rms_reprojection = 0.0; // pixels, per point
    int point_count = 0;
};

struct CalibrationResult {
    std::map<std::string, RigidTransform> world_from_camera;
    std::map<std::string, double> per_camera_rms; // pixels
    int frames_used = 0;
};

struct RefineOutcome {
    CalibrationResult result;
    bool converged = false;
    int iterations = 0;
    double initial_cost = 0.0; // sum of squared pixel residuals
    double final_cost = 0.0;
};

struct ExperimentRow {
    double radius_m = 0.0;
    std::string prop;
    int trial = 0;
    double mean_trans_err_m = 0.0;
    double mean_rot_err_rad = 0.0;
};
using ExperimentReport = std::vector<ExperimentRow>;

/// Axis-aligned box for prop translations plus a rotation cone (maximum
/// geodesic deviation from the nominal orientation).
struct PropWorkspace {
    Vec3 box_min;
    Vec3 box_max;
    Rotation nominal_rotation;
    double cone_half_angle = 0.0; // radians
};

/// n poses with translation uniform in the box and rotation uniformly
/// deviated (random axis, angle uniform in [0, cone]) from the nominal.
/// Throws std::invalid_argument for n < 1 or an inverted box.
std::vector<RigidTransform> sample_prop_poses(const PropWorkspace& workspace, int n,
                                              RngStream& rng);

struct PixelObservation {
    int point_id = 0;
    double u = 0.0;
    double v = 0.0;
};

/// Simulated corner detection: projects each fiducial and keeps it when it
/// lands in the image in front of the camera; planar patterns additionally
/// require the +z pattern normal to face the camera at under 75 degrees of
/// incidence. Per-axis Gaussian pixel noise from the camera model.
std::vector<PixelObservation> observe_fiducials(const CameraModel& cam,
                                                const CalibrationProp& prop,
                                                const RigidTransform& world_from_prop,
                                                RngStream& rng);

/// Pose from 3D-2D correspondences: homography initialization for planar
/// sets (>= 4 points), 6-point DLT otherwise, then Gauss-Newton on the
/// reprojection error (step norm < 1e-10 or 50 iterations, cost never
/// increased). Throws std::invalid_argument for too few points and
/// DegenerateGeometryError for collinear/rank-deficient configurations.
PnpSolution solve_pnp(std::span<const Vec3> points_local,
                      std::span<const PixelObservation> pixels,
                      const CameraIntrinsics& intr);

/// Closed-form multi-camera extrinsics: per-frame PnP, covisibility-pair
/// relative poses averaged (chordal mean + mean translation), the world
/// frame fixed by PnP against the anchor, remaining cameras placed by
/// breadth-first propagation. Throws DisconnectedGraphError (naming the
/// unreachable cameras) or when the anchor was never observed.
CalibrationResult estimate_extrinsics(std::span<const FiducialObservation> prop_obs,
                                      std::span<const FiducialObservation> anchor_obs,
                                      const CalibrationProp& prop,
                                      const WorldAnchor& anchor,
                                      const std::map<std::string, CameraIntrinsics>& cameras);

/// Joint Levenberg-Marquardt over all camera poses and per-frame prop poses
/// (anchor observations pin the gauge). Monotone non-increasing cost;
/// stops at relative cost change < 1e-12 or 100 iterations. On divergence
/// the initial result is returned with converged = false.
RefineOutcome refine_global(const CalibrationResult& initial,
                            std::span<const FiducialObservation> prop_obs,
                            std::span<const FiducialObservation> anchor_obs,
                            const CalibrationProp& prop, const WorldAnchor& anchor,
                            const std::map<std::string, CameraIntrinsics>& cameras);

PoseError pose_error(const RigidTransform& estimated, const RigidTransform& truth);

struct CalibrationExperimentParams {
    std::vector<double> radii = {2.0, 3.0, 4.0, 5.0};
    std::vector<CalibrationProp> props; // defaults to {planar_square, cluster8}
    int camera_count = 4;
    int frames = 30;
    double pixel_noise_sigma = 1.0;
    int trials = 1;
    std::uint64_t master_seed = 0;
    bool refine = true;
    int threads = 1; // parallel_for over trials; results are slot-ordered

    // When non-empty, every (radius, prop, trial) combination dumps its raw
    // fiducial observations as line-delimited JSON into this directory
    // (observations_r<i>_p<j>_t<k>.jsonl), for external calibration tools.
    std::string observation_dump_dir;
};

/// Circle-of-cameras recovery experiment: cameras evenly spaced at the
/// given radii (height 1.2 m, facing the center), prop poses swept through
/// the workspace, estimate + refine, then mean pose error across cameras
/// against the ground-truth placement. One row per (radius, prop, trial);
/// all randomness derives from master_seed and the row indices.
ExperimentReport run_calibration_experiment(const CalibrationExperimentParams& params);

} // namespace skelsim
