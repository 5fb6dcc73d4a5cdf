#include "skelsim/scene.hpp"

#include "skelsim/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>

using namespace skelsim;
using skelsim::test::vec_near;

namespace {

Capsule sphere_capsule(const Vec3& center, double radius) {
    Capsule c;
    c.endpoint_a = center;
    c.endpoint_b = center;
    c.radius = radius;
    return c;
}

double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squared_norm();
    if (len2 < 1e-18) {
        return (p - a).norm();
    }
    const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + ab * s)).norm();
}

CameraModel front_camera(double distance = 3.0) {
    CameraModel cam = preset(CameraPreset::KinectV2);
    cam.id = "front";
    cam.world_from_camera = look_at({distance, 0, 1.2}, {0, 0, 1.2}, {0, 0, 1});
    return cam;
}

} // namespace

TEST_CASE("props validate their invariants") {
    CHECK_NOTHROW(validate_prop(planar_square_prop()));
    CHECK_NOTHROW(validate_prop(cluster8_prop()));
    CHECK(planar_square_prop().planar);
    CHECK(!cluster8_prop().planar);
    CHECK(cluster8_prop().fiducial_points.size() == 8);

    CalibrationProp bad;
    bad.name = "bad";
    bad.fiducial_points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    CHECK_THROWS_AS(validate_prop(bad), std::invalid_argument);
    bad.fiducial_points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    CHECK_THROWS_WITH_AS(validate_prop(bad), doctest::Contains("collinear"),
                         std::invalid_argument);
    bad.planar = true;
    bad.fiducial_points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    CHECK_THROWS_AS(validate_prop(bad), std::invalid_argument);
}

TEST_CASE("world anchor transforms its fiducials") {
    const RigidTransform pose{Rotation::rot_z(0.5), {1, 2, 0.5}};
    const WorldAnchor anchor = default_world_anchor(pose);
    REQUIRE(anchor.fiducial_points_world.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(vec_near(anchor.fiducial_points_world[i],
                       transform_point(pose, anchor.fiducial_points_local[i]), 1e-12));
    }
    CHECK(anchor.planar);
}

TEST_CASE("build_capsules") {
    SUBCASE("full pose gives the 13 configured bones") {
        const auto capsules = build_capsules(standing_pose(), default_capsule_radii());
        CHECK(capsules.size() == 13);
    }
    SUBCASE("empty pose gives nothing") {
        SkeletonPose empty;
        CHECK(build_capsules(empty, default_capsule_radii()).empty());
    }
    SUBCASE("torso endpoints are the neck and mid-hip positions") {
        const SkeletonPose pose = standing_pose();
        const auto capsules = build_capsules(pose, default_capsule_radii());
        bool found = false;
        for (const Capsule& c : capsules) {
            if (vec_near(c.endpoint_a, pose[Joint::Neck].position, 0.0) &&
                vec_near(c.endpoint_b, pose[Joint::MidHip].position, 0.0)) {
                found = true;
                CHECK(c.radius == doctest::Approx(0.15));
                CHECK(c.owns(Joint::Neck));
                CHECK(c.owns(Joint::MidHip));
                CHECK(!c.owns(Joint::RWrist));
            }
        }
        CHECK(found);
    }
    SUBCASE("missing joints skip their bones") {
        SkeletonPose pose = standing_pose();
        pose[Joint::RElbow].present = false;
        const auto capsules = build_capsules(pose, default_capsule_radii());
        CHECK(capsules.size() == 11); // right upper arm and forearm gone
    }
    SUBCASE("radius overrides apply") {
        std::map<std::string, double> radii = default_capsule_radii();
        radii["torso"] = 0.2;
        const auto capsules = build_capsules(standing_pose(), radii);
        bool found = false;
        for (const Capsule& c : capsules) {
            if (c.radius == 0.2) {
                found = true;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("ray_capsule") {
    SUBCASE("sphere analytic solution") {
        const Capsule c = sphere_capsule({0, 0, 5}, 0.5);
        const auto t = ray_capsule({0, 0, 0}, {0, 0, 1}, c);
        REQUIRE(t.has_value());
        CHECK(*t == doctest::Approx(4.5).epsilon(1e-12));
    }
    SUBCASE("parallel ray at twice the radius misses") {
        Capsule c;
        c.endpoint_a = {0, 0, 0};
        c.endpoint_b = {0, 0, 2};
        c.radius = 0.3;
        CHECK(!ray_capsule({0.6, 0, -1}, {0, 0, 1}, c).has_value());
    }
    SUBCASE("origin inside yields the exit distance") {
        const Capsule c = sphere_capsule({0, 0, 0}, 1.0);
        const auto t = ray_capsule({0.2, 0, 0}, {1, 0, 0}, c);
        REQUIRE(t.has_value());
        CHECK(*t == doctest::Approx(0.8).epsilon(1e-12));

        Capsule body;
        body.endpoint_a = {0, -1, 0};
        body.endpoint_b = {0, 1, 0};
        body.radius = 0.5;
        const auto t2 = ray_capsule({0, 0, 0}, {1, 0, 0}, body);
        REQUIRE(t2.has_value());
        CHECK(*t2 == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("non-unit direction is rejected") {
        const Capsule c = sphere_capsule({0, 0, 5}, 0.5);
        CHECK_THROWS_AS(ray_capsule({0, 0, 0}, {0, 0, 2}, c), std::invalid_argument);
    }
    SUBCASE("hits satisfy the surface equation") {
        RngStream rng(51);
        Capsule c;
        c.endpoint_a = {-0.3, 0.1, 1.0};
        c.endpoint_b = {0.4, -0.2, 1.6};
        c.radius = 0.25;
        int hits = 0;
        for (int i = 0; i < 500; ++i) {
            const Vec3 origin = skelsim::test::random_vec(rng, 3.0);
            const Vec3 target = Vec3{rng.uniform(-0.4, 0.5), rng.uniform(-0.3, 0.2),
                                     rng.uniform(0.8, 1.8)};
            const Vec3 dir = (target - origin).normalized();
            const auto t = ray_capsule(origin, dir, c);
            if (!t) {
                continue;
            }
            ++hits;
            const Vec3 hit = origin + dir * *t;
            CHECK(std::abs(distance_to_segment(hit, c.endpoint_a, c.endpoint_b) -
                           c.radius) < 1e-9);
        }
        CHECK(hits > 100);
    }
}

TEST_CASE("joint visibility") {
    const CameraModel cam = front_camera();
    const Vec3 joint{0, 0, 1.2};

    SUBCASE("empty scene is visible") {
        CHECK(joint_visible(cam, joint, {}, std::nullopt, 0.0));
    }
    SUBCASE("blocking capsule occludes") {
        // Halfway between camera (x = 3) and the joint (x = 0).
        const std::vector<Capsule> blockers{sphere_capsule({1.5, 0, 1.2}, 0.2)};
        CHECK(!joint_visible(cam, joint, blockers, std::nullopt, 0.0));
    }
    SUBCASE("behind the camera is not visible") {
        CHECK(!joint_visible(cam, {5.0, 0, 1.2}, {}, std::nullopt, 0.0));
    }
    SUBCASE("owner capsules do not occlude their own joints") {
        Capsule shell = sphere_capsule(joint, 0.3);
        shell.owner_joints = {Joint::Nose};
        const std::vector<Capsule> capsules{shell};
        CHECK(joint_visible(cam, joint, capsules, Joint::Nose, 0.0));
        CHECK(!joint_visible(cam, joint, capsules, Joint::Neck, 0.0));
    }
    SUBCASE("visibility is monotone in the margin") {
        // Surface just in front of the joint: occludes at small margins,
        // tolerated at larger ones.
        const std::vector<Capsule> blockers{sphere_capsule({0.05, 0, 1.2}, 0.04)};
        bool previous = false;
        for (const double margin : {0.0, 0.02, 0.05, 0.12, 0.3}) {
            const bool visible = joint_visible(cam, joint, blockers, std::nullopt, margin);
            if (previous) {
                CHECK(visible); // once visible, stays visible as margin grows
            }
            previous = visible;
        }
        CHECK(previous);
        CHECK(!joint_visible(cam, joint, blockers, std::nullopt, 0.0));
    }
}

TEST_CASE("visibility margin follows the owning capsule radius") {
    const auto capsules = build_capsules(standing_pose(), default_capsule_radii());
    CHECK(visibility_margin(Joint::Nose, capsules) == doctest::Approx(0.5 * 0.11));
    CHECK(visibility_margin(Joint::RWrist, capsules) == doctest::Approx(0.5 * 0.045));
    CHECK(visibility_margin(Joint::RBigToe, capsules) == 0.0);
}

TEST_CASE("depth_at_pixel") {
    CameraModel cam = front_camera();
    cam.depth_noise = {0.0, 0.0, 8.0};
    RngStream rng(3);

    SUBCASE("sphere dead center") {
        // Sphere center 3 m in front of the camera along the optical axis.
        const std::vector<Capsule> capsules{sphere_capsule({0, 0, 1.2}, 0.25)};
        const auto z = depth_at_pixel(cam, cam.intrinsics.cx, cam.intrinsics.cy,
                                      capsules, rng);
        REQUIRE(z.has_value());
        CHECK(*z == doctest::Approx(2.75).epsilon(1e-12));
    }
    SUBCASE("empty space gives no return") {
        CHECK(!depth_at_pixel(cam, cam.intrinsics.cx, cam.intrinsics.cy, {}, rng)
                   .has_value());
    }
    SUBCASE("pixel outside the image throws") {
        CHECK_THROWS_AS(depth_at_pixel(cam, -1.0, 10.0, {}, rng), std::out_of_range);
    }
    SUBCASE("surface depth never exceeds the joint depth") {
        const SkeletonPose pose = standing_pose();
        const auto capsules = build_capsules(pose, default_capsule_radii());
        for (const Joint j : {Joint::Neck, Joint::MidHip, Joint::RShoulder}) {
            const auto pix = project(cam, pose[j].position);
            REQUIRE(pix.has_value());
            const auto z = depth_at_pixel(cam, pix->u, pix->v, capsules, rng);
            REQUIRE(z.has_value());
            CHECK(*z <= pix->z + 1e-12);
        }
    }
    SUBCASE("zero noise is deterministic and rng independent") {
        const std::vector<Capsule> capsules{sphere_capsule({0, 0, 1.2}, 0.25)};
        RngStream a(1), b(999);
        const auto za = depth_at_pixel(cam, 250.0, 210.0, capsules, a);
        const auto zb = depth_at_pixel(cam, 250.0, 210.0, capsules, b);
        CHECK(za == zb);
    }
}
