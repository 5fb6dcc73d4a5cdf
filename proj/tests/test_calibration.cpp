#include "skelsim/calibration.hpp"

#include "skelsim/errors.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace skelsim;
using skelsim::test::random_rotation;
using skelsim::test::vec_near;

namespace {

constexpr double kPi = std::numbers::pi;

CameraModel ring_camera(int index, int count, double radius, double noise_sigma) {
    const double bearing = 2.0 * kPi * index / count;
    CameraModel cam = preset(CameraPreset::KinectV2);
    cam.id = "cam" + std::to_string(index);
    cam.pixel_noise_sigma = noise_sigma;
    cam.world_from_camera = look_at({radius * std::cos(bearing),
                                     radius * std::sin(bearing), 1.2},
                                    {0, 0, 1.2}, {0, 0, 1});
    return cam;
}

RigidTransform facing_pose(double azimuth, const Vec3& translation) {
    return {Rotation::rot_z(azimuth) * Rotation::rot_y(kPi / 2.0), translation};
}

/// Perfect pinhole projection of a prop-local point for building synthetic
/// correspondences (independent of observe_fiducials).
PixelObservation exact_pixel(const CameraModel& cam, const RigidTransform& world_from_prop,
                             const Vec3& p_local, int point_id) {
    const Vec3 w = transform_point(world_from_prop, p_local);
    const auto pix = project(cam, w);
    REQUIRE(pix.has_value());
    return {point_id, pix->u, pix->v};
}

struct SyntheticRig {
    std::vector<CameraModel> cams;
    std::map<std::string, CameraIntrinsics> intrinsics;
    std::map<std::string, RigidTransform> truth;
    WorldAnchor anchor;
    std::vector<FiducialObservation> prop_obs;
    std::vector<FiducialObservation> anchor_obs;
};

SyntheticRig make_rig(const CalibrationProp& prop, int camera_count, int frames,
                      double noise_sigma, std::uint64_t seed) {
    SyntheticRig rig;
    for (int k = 0; k < camera_count; ++k) {
        CameraModel cam = ring_camera(k, camera_count, 3.0, noise_sigma);
        rig.intrinsics[cam.id] = cam.intrinsics;
        rig.truth[cam.id] = cam.world_from_camera;
        rig.cams.push_back(std::move(cam));
    }
    rig.anchor = default_world_anchor(facing_pose(0.0, {1.8, 0.0, 0.8}), 0.3);
    RngStream rng(seed);
    for (int f = 0; f < frames; ++f) {
        PropWorkspace ws;
        ws.box_min = Vec3{-0.5, -0.5, 0.7};
        ws.box_max = Vec3{0.5, 0.5, 1.7};
        ws.nominal_rotation = facing_pose(2.0 * kPi * f / frames, {}).rotation;
        ws.cone_half_angle = 40.0 * kPi / 180.0;
        const RigidTransform world_from_prop = sample_prop_poses(ws, 1, rng).front();
        for (const CameraModel& cam : rig.cams) {
            for (const auto& px : observe_fiducials(cam, prop, world_from_prop, rng)) {
                rig.prop_obs.push_back({f, cam.id, px.point_id, px.u, px.v});
            }
            CalibrationProp marker;
            marker.planar = rig.anchor.planar;
            marker.name = "anchor";
            marker.fiducial_points = rig.anchor.fiducial_points_local;
            for (const auto& px :
                 observe_fiducials(cam, marker, rig.anchor.world_from_anchor, rng)) {
                rig.anchor_obs.push_back({f, cam.id, px.point_id, px.u, px.v});
            }
        }
    }
    return rig;
}

} // namespace

TEST_CASE("sample_prop_poses") {
    PropWorkspace ws;
    ws.box_min = {1, 2, 3};
    ws.box_max = {1, 2, 3};
    ws.nominal_rotation = Rotation::rot_z(0.7);
    ws.cone_half_angle = 0.0;

    SUBCASE("collapsed distribution returns the nominal pose") {
        RngStream rng(1);
        const auto poses = sample_prop_poses(ws, 1, rng);
        REQUIRE(poses.size() == 1);
        CHECK(vec_near(poses[0].translation, {1, 2, 3}, 0.0));
        CHECK(geodesic_angle(poses[0].rotation, ws.nominal_rotation) < 1e-12);
    }
    SUBCASE("translations stay inside the box and rotations inside the cone") {
        ws.box_min = {-1, -2, 0};
        ws.box_max = {1, 0, 3};
        ws.cone_half_angle = 0.4;
        RngStream rng(2);
        for (const auto& pose : sample_prop_poses(ws, 200, rng)) {
            CHECK(pose.translation.x >= -1.0);
            CHECK(pose.translation.x < 1.0);
            CHECK(pose.translation.y >= -2.0);
            CHECK(pose.translation.y < 0.0);
            CHECK(pose.translation.z >= 0.0);
            CHECK(pose.translation.z < 3.0);
            CHECK(geodesic_angle(pose.rotation, ws.nominal_rotation) <= 0.4 + 1e-12);
        }
    }
    SUBCASE("fixed seed repeats the list") {
        RngStream a(3), b(3);
        const auto pa = sample_prop_poses(ws, 10, a);
        const auto pb = sample_prop_poses(ws, 10, b);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(vec_near(pa[i].translation, pb[i].translation, 0.0));
            CHECK(geodesic_angle(pa[i].rotation, pb[i].rotation) == 0.0);
        }
    }
    SUBCASE("invalid arguments") {
        RngStream rng(4);
        CHECK_THROWS_AS(sample_prop_poses(ws, 0, rng), std::invalid_argument);
        PropWorkspace inverted = ws;
        inverted.box_min = {2, 0, 0};
        inverted.box_max = {1, 0, 0};
        CHECK_THROWS_AS(sample_prop_poses(inverted, 1, rng), std::invalid_argument);
    }
}

TEST_CASE("observe_fiducials") {
    CameraModel cam = ring_camera(0, 4, 3.0, 0.0);
    const CalibrationProp prop = planar_square_prop();

    SUBCASE("noiseless full view matches exact projections") {
        const RigidTransform pose = facing_pose(0.0, {0, 0, 1.2});
        RngStream rng(1);
        const auto obs = observe_fiducials(cam, prop, pose, rng);
        REQUIRE(obs.size() == 4);
        for (const auto& o : obs) {
            const auto exact = exact_pixel(cam, pose, prop.fiducial_points[o.point_id],
                                           o.point_id);
            CHECK(o.u == doctest::Approx(exact.u).epsilon(1e-12));
            CHECK(o.v == doctest::Approx(exact.v).epsilon(1e-12));
        }
    }
    SUBCASE("edge-on planar prop is rejected") {
        // Normal perpendicular to the view direction: 90 degree incidence.
        const RigidTransform pose{Rotation::rot_z(kPi / 2.0) *
                                      Rotation::rot_y(kPi / 2.0),
                                  Vec3{0, 0, 1.2}};
        RngStream rng(1);
        CHECK(observe_fiducials(cam, prop, pose, rng).empty());
    }
    SUBCASE("prop behind the camera is rejected") {
        const RigidTransform pose = facing_pose(0.0, {6.0, 0, 1.2});
        RngStream rng(1);
        CHECK(observe_fiducials(cam, prop, pose, rng).empty());
    }
    SUBCASE("non-planar prop skips the facing test") {
        const CalibrationProp cluster = cluster8_prop();
        const RigidTransform pose{Rotation::rot_z(1.3), Vec3{0, 0, 1.2}};
        RngStream rng(1);
        CHECK(observe_fiducials(cam, cluster, pose, rng).size() == 8);
    }
}

TEST_CASE("solve_pnp recovers generating poses exactly without noise") {
    RngStream rng(61);
    const CameraModel cam = ring_camera(0, 4, 3.0, 0.0);
    for (const CalibrationProp& prop : {planar_square_prop(), cluster8_prop()}) {
        for (int trial = 0; trial < 25; ++trial) {
            const RigidTransform world_from_prop =
                facing_pose(rng.uniform(-0.6, 0.6), {rng.uniform(-0.3, 0.3),
                                                      rng.uniform(-0.3, 0.3),
                                                      rng.uniform(0.9, 1.5)});
            std::vector<PixelObservation> pixels;
            for (std::size_t i = 0; i < prop.fiducial_points.size(); ++i) {
                pixels.push_back(exact_pixel(cam, world_from_prop,
                                             prop.fiducial_points[i],
                                             static_cast<int>(i)));
            }
            const PnpSolution sol = solve_pnp(prop.fiducial_points, pixels, cam.intrinsics);
            const RigidTransform expected =
                compose(invert(cam.world_from_camera), world_from_prop);
            const PoseError err = pose_error(sol.camera_from_prop, expected);
            CHECK(err.translation_error < 1e-9);
            CHECK(err.rotation_error < 1e-9);
            CHECK(sol.rms_reprojection < 1e-9);
            CHECK(sol.point_count == static_cast<int>(prop.fiducial_points.size()));
        }
    }
}

TEST_CASE("solve_pnp precondition and degeneracy errors") {
    const CameraModel cam = ring_camera(0, 4, 3.0, 0.0);
    const CalibrationProp prop = planar_square_prop();
    const RigidTransform pose = facing_pose(0.0, {0, 0, 1.2});
    std::vector<PixelObservation> pixels;
    for (std::size_t i = 0; i < 3; ++i) {
        pixels.push_back(exact_pixel(cam, pose, prop.fiducial_points[i],
                                     static_cast<int>(i)));
    }
    CHECK_THROWS_AS(solve_pnp(prop.fiducial_points, pixels, cam.intrinsics),
                    std::invalid_argument);

    // Collinear fiducials are degenerate regardless of count.
    const std::vector<Vec3> line{{0, 0, 0}, {0.1, 0, 0}, {0.2, 0, 0}, {0.3, 0, 0}};
    std::vector<PixelObservation> line_pixels;
    const RigidTransform line_pose = facing_pose(0.0, {0, 0, 1.2});
    for (std::size_t i = 0; i < line.size(); ++i) {
        line_pixels.push_back(exact_pixel(cam, line_pose, line[i], static_cast<int>(i)));
    }
    CHECK_THROWS_AS(solve_pnp(line, line_pixels, cam.intrinsics), DegenerateGeometryError);

    // Non-planar sets need six points.
    const CalibrationProp cluster = cluster8_prop();
    std::vector<PixelObservation> five;
    for (std::size_t i = 0; i < 5; ++i) {
        five.push_back(exact_pixel(cam, pose, cluster.fiducial_points[i],
                                   static_cast<int>(i)));
    }
    CHECK_THROWS_AS(solve_pnp(cluster.fiducial_points, five, cam.intrinsics),
                    std::invalid_argument);
}

TEST_CASE("solve_pnp residual scale under pixel noise") {
    RngStream rng(67);
    const CameraModel cam = ring_camera(0, 4, 3.0, 0.0);
    const CalibrationProp prop = cluster8_prop();
    const double sigma = 1.0;
    for (int trial = 0; trial < 100; ++trial) {
        const RigidTransform world_from_prop =
            facing_pose(rng.uniform(-0.5, 0.5),
                        {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                         rng.uniform(0.9, 1.5)});
        std::vector<PixelObservation> pixels;
        for (std::size_t i = 0; i < prop.fiducial_points.size(); ++i) {
            auto px = exact_pixel(cam, world_from_prop, prop.fiducial_points[i],
                                  static_cast<int>(i));
            px.u += rng.normal(0.0, sigma);
            px.v += rng.normal(0.0, sigma);
            pixels.push_back(px);
        }
        const PnpSolution sol = solve_pnp(prop.fiducial_points, pixels, cam.intrinsics);
        CHECK(sol.rms_reprojection > 0.0);
        CHECK(sol.rms_reprojection < 3.0 * sigma);
    }
}

TEST_CASE("estimate_extrinsics recovers a four camera ring without noise") {
    const SyntheticRig rig = make_rig(cluster8_prop(), 4, 30, 0.0, 71);
    const CalibrationResult result = estimate_extrinsics(
        rig.prop_obs, rig.anchor_obs, cluster8_prop(), rig.anchor, rig.intrinsics);
    REQUIRE(result.world_from_camera.size() == 4);
    for (const auto& [id, pose] : result.world_from_camera) {
        const PoseError err = pose_error(pose, rig.truth.at(id));
        CHECK(err.translation_error < 1e-6);
        CHECK(err.rotation_error < 1e-6);
    }
    CHECK(result.frames_used > 0);
    for (const auto& [id, rms] : result.per_camera_rms) {
        CHECK(rms < 1e-6);
    }
}

TEST_CASE("single camera observing only the anchor is placed by anchor PnP alone") {
    const CameraModel cam = ring_camera(0, 4, 3.0, 0.0);
    const WorldAnchor anchor = default_world_anchor(facing_pose(0.0, {0, 0, 0.55}));
    CalibrationProp marker;
    marker.planar = anchor.planar;
    marker.name = "anchor";
    marker.fiducial_points = anchor.fiducial_points_local;
    RngStream rng(5);
    std::vector<FiducialObservation> anchor_obs;
    for (const auto& px : observe_fiducials(cam, marker, anchor.world_from_anchor, rng)) {
        anchor_obs.push_back({0, cam.id, px.point_id, px.u, px.v});
    }
    const CalibrationResult result =
        estimate_extrinsics({}, anchor_obs, cluster8_prop(), anchor,
                            {{cam.id, cam.intrinsics}});
    REQUIRE(result.world_from_camera.count(cam.id) == 1);
    const PoseError err =
        pose_error(result.world_from_camera.at(cam.id), cam.world_from_camera);
    CHECK(err.translation_error < 1e-9);
    CHECK(err.rotation_error < 1e-9);
}

TEST_CASE("disconnected cameras are reported by name") {
    SyntheticRig rig = make_rig(cluster8_prop(), 4, 10, 0.0, 73);
    // A fifth camera that never observes anything.
    rig.intrinsics["cam9"] = preset(CameraPreset::KinectV2).intrinsics;
    CHECK_THROWS_WITH_AS(
        estimate_extrinsics(rig.prop_obs, rig.anchor_obs, cluster8_prop(), rig.anchor,
                            rig.intrinsics),
        doctest::Contains("cam9"), DisconnectedGraphError);

    // No anchor observations at all.
    CHECK_THROWS_WITH_AS(
        estimate_extrinsics(rig.prop_obs, {}, cluster8_prop(), rig.anchor, rig.intrinsics),
        doctest::Contains("anchor"), DisconnectedGraphError);
}

TEST_CASE("estimate_extrinsics is invariant to observation order") {
    SyntheticRig rig = make_rig(planar_square_prop(), 3, 24, 0.5, 79);
    const CalibrationResult forward = estimate_extrinsics(
        rig.prop_obs, rig.anchor_obs, planar_square_prop(), rig.anchor, rig.intrinsics);
    std::mt19937 shuffler(99);
    std::shuffle(rig.prop_obs.begin(), rig.prop_obs.end(), shuffler);
    std::shuffle(rig.anchor_obs.begin(), rig.anchor_obs.end(), shuffler);
    const CalibrationResult shuffled = estimate_extrinsics(
        rig.prop_obs, rig.anchor_obs, planar_square_prop(), rig.anchor, rig.intrinsics);
    for (const auto& [id, pose] : forward.world_from_camera) {
        const PoseError err = pose_error(pose, shuffled.world_from_camera.at(id));
        CHECK(err.translation_error < 1e-9);
        CHECK(err.rotation_error < 1e-9);
    }
}

TEST_CASE("refine_global") {
    SUBCASE("noise-free input is a fixed point with zero cost") {
        const SyntheticRig rig = make_rig(cluster8_prop(), 4, 12, 0.0, 83);
        const CalibrationResult initial = estimate_extrinsics(
            rig.prop_obs, rig.anchor_obs, cluster8_prop(), rig.anchor, rig.intrinsics);
        const RefineOutcome outcome =
            refine_global(initial, rig.prop_obs, rig.anchor_obs, cluster8_prop(),
                          rig.anchor, rig.intrinsics);
        CHECK(outcome.converged);
        CHECK(outcome.final_cost <= outcome.initial_cost);
        CHECK(outcome.final_cost < 1e-12);
        for (const auto& [id, pose] : outcome.result.world_from_camera) {
            const PoseError err = pose_error(pose, initial.world_from_camera.at(id));
            CHECK(err.translation_error < 1e-9);
            CHECK(err.rotation_error < 1e-9);
        }
    }
    SUBCASE("cost never increases on noisy instances") {
        const SyntheticRig rig = make_rig(planar_square_prop(), 4, 20, 1.0, 89);
        const CalibrationResult initial = estimate_extrinsics(
            rig.prop_obs, rig.anchor_obs, planar_square_prop(), rig.anchor,
            rig.intrinsics);
        const RefineOutcome outcome =
            refine_global(initial, rig.prop_obs, rig.anchor_obs, planar_square_prop(),
                          rig.anchor, rig.intrinsics);
        CHECK(outcome.final_cost <= outcome.initial_cost);
        CHECK(outcome.converged);
    }
    SUBCASE("refinement beats propagation on average") {
        double initial_sum = 0.0;
        double refined_sum = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const SyntheticRig rig =
                make_rig(cluster8_prop(), 4, 20, 1.0, 1000 + trial);
            const CalibrationResult initial = estimate_extrinsics(
                rig.prop_obs, rig.anchor_obs, cluster8_prop(), rig.anchor,
                rig.intrinsics);
            const RefineOutcome outcome =
                refine_global(initial, rig.prop_obs, rig.anchor_obs, cluster8_prop(),
                              rig.anchor, rig.intrinsics);
            for (const auto& [id, pose] : initial.world_from_camera) {
                initial_sum += pose_error(pose, rig.truth.at(id)).translation_error;
            }
            for (const auto& [id, pose] : outcome.result.world_from_camera) {
                refined_sum += pose_error(pose, rig.truth.at(id)).translation_error;
            }
        }
        CHECK(refined_sum < initial_sum);
    }
}

TEST_CASE("pose_error examples") {
    const RigidTransform t{Rotation::rot_x(0.4), {1, 2, 3}};
    const PoseError zero = pose_error(t, t);
    CHECK(zero.translation_error == 0.0);
    CHECK(zero.rotation_error < 1e-12);

    RigidTransform shifted = t;
    shifted.translation += Vec3{0.03, 0.0, 0.04};
    CHECK(pose_error(shifted, t).translation_error == doctest::Approx(0.05).epsilon(1e-12));

    RigidTransform rotated = t;
    rotated.rotation = t.rotation * Rotation::rot_y(0.2);
    CHECK(pose_error(rotated, t).rotation_error == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("calibration experiment") {
    SUBCASE("zero noise recovers every camera") {
        CalibrationExperimentParams params;
        params.radii = {3.0};
        params.props = {cluster8_prop()};
        params.camera_count = 4;
        params.frames = 30;
        params.pixel_noise_sigma = 0.0;
        params.trials = 1;
        params.master_seed = 5;
        const ExperimentReport report = run_calibration_experiment(params);
        REQUIRE(report.size() == 1);
        CHECK(report[0].mean_trans_err_m < 1e-6);
        CHECK(report[0].mean_rot_err_rad < 1e-6);
    }
    SUBCASE("same seed gives identical reports, even across thread counts") {
        CalibrationExperimentParams params;
        params.radii = {2.0, 4.0};
        params.props = {planar_square_prop()};
        params.trials = 3;
        params.pixel_noise_sigma = 1.0;
        params.master_seed = 11;
        params.threads = 1;
        const ExperimentReport a = run_calibration_experiment(params);
        params.threads = 4;
        const ExperimentReport b = run_calibration_experiment(params);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].radius_m == b[i].radius_m);
            CHECK(a[i].prop == b[i].prop);
            CHECK(a[i].trial == b[i].trial);
            CHECK(a[i].mean_trans_err_m == b[i].mean_trans_err_m);
            CHECK(a[i].mean_rot_err_rad == b[i].mean_rot_err_rad);
        }
    }
    SUBCASE("invalid parameters") {
        CalibrationExperimentParams params;
        params.radii = {0.0};
        CHECK_THROWS_AS(run_calibration_experiment(params), std::invalid_argument);
        params.radii = {2.0};
        params.trials = 0;
        CHECK_THROWS_AS(run_calibration_experiment(params), std::invalid_argument);
    }
}
