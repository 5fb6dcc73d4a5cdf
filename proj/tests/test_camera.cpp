#include "skelsim/camera.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <numbers>

using namespace skelsim;
using skelsim::test::vec_near;

namespace {

CameraModel test_camera() {
    CameraModel cam;
    cam.id = "test";
    cam.intrinsics = {500.0, 500.0, 320.0, 240.0, 640, 480};
    return cam;
}

} // namespace

TEST_CASE("project examples") {
    const CameraModel cam = test_camera();
    SUBCASE("principal axis") {
        const auto p = project(cam, {0, 0, 2});
        REQUIRE(p.has_value());
        CHECK(p->u == doctest::Approx(320.0));
        CHECK(p->v == doctest::Approx(240.0));
        CHECK(p->z == doctest::Approx(2.0));
    }
    SUBCASE("hand-applied pinhole formula") {
        const auto p = project(cam, {0.5, 0, 2});
        REQUIRE(p.has_value());
        CHECK(p->u == doctest::Approx(445.0).epsilon(1e-12));
    }
    SUBCASE("behind the camera") {
        CHECK(!project(cam, {0, 0, -1}).has_value());
        CHECK(!project(cam, {0, 0, 0}).has_value());
    }
}

TEST_CASE("back_project examples and inverse property") {
    CameraModel cam = test_camera();
    SUBCASE("principal ray") {
        const Vec3 p = back_project(cam, 320.0, 240.0, 3.0);
        CHECK(vec_near(p, {0, 0, 3}, 1e-12));
    }
    SUBCASE("inverse of the projection example") {
        const Vec3 p = back_project(cam, 445.0, 240.0, 2.0);
        CHECK(vec_near(p, {0.5, 0, 2}, 1e-12));
    }
    SUBCASE("z must be positive") {
        CHECK_THROWS_AS(back_project(cam, 320, 240, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(back_project(cam, 320, 240, -2.0), std::invalid_argument);
    }
    SUBCASE("project then back_project on random in-image triples") {
        RngStream rng(41);
        cam.world_from_camera = skelsim::test::random_transform(rng);
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform(0.0, 640.0);
            const double v = rng.uniform(0.0, 480.0);
            const double z = rng.uniform(0.2, 9.0);
            const Vec3 world = back_project(cam, u, v, z);
            const auto pix = project(cam, world);
            REQUIRE(pix.has_value());
            CHECK(std::abs(pix->u - u) < 1e-9);
            CHECK(std::abs(pix->v - v) < 1e-9);
            CHECK(std::abs(pix->z - z) < 1e-9);
        }
    }
}

TEST_CASE("projection is scale consistent along the ray") {
    const CameraModel cam = test_camera();
    RngStream rng(43);
    for (int i = 0; i < 100; ++i) {
        const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.5, 4.0)};
        const double lambda = rng.uniform(0.5, 3.0);
        const auto a = project(cam, p);
        const auto b = project(cam, p * lambda);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(a->u == doctest::Approx(b->u).epsilon(1e-12));
        CHECK(a->v == doctest::Approx(b->v).epsilon(1e-12));
        CHECK(b->z == doctest::Approx(a->z * lambda).epsilon(1e-12));
    }
}

TEST_CASE("in_image bounds") {
    const CameraIntrinsics intr = test_camera().intrinsics;
    CHECK(in_image(intr, 0, 0));
    CHECK(!in_image(intr, 640, 0));
    CHECK(!in_image(intr, 0, 480));
    CHECK(!in_image(intr, -0.001, 10));
    CHECK(in_image(intr, intr.cx, intr.cy));
}

TEST_CASE("depth noise") {
    SUBCASE("zero noise passes depth through") {
        DepthNoiseModel model{0.0, 0.0, 8.0};
        RngStream rng(1);
        CHECK(apply_depth_noise(model, 3.0, rng) == 3.0);
    }
    SUBCASE("dropout beyond max range") {
        DepthNoiseModel model;
        RngStream rng(1);
        CHECK(!apply_depth_noise(model, model.max_range + 0.01, rng).has_value());
    }
    SUBCASE("invalid depth") {
        DepthNoiseModel model;
        RngStream rng(1);
        CHECK_THROWS_AS(apply_depth_noise(model, 0.0, rng), std::invalid_argument);
    }
    SUBCASE("sample deviation matches the quadratic law") {
        DepthNoiseModel model{0.002, 0.0005, 8.0};
        RngStream rng(123);
        const double z = 3.0;
        const double expected = 0.002 + 0.0005 * 9.0; // 0.0065
        double sum = 0.0, sq = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const auto noisy = apply_depth_noise(model, z, rng);
            REQUIRE(noisy.has_value());
            const double d = *noisy - z;
            sum += d;
            sq += d * d;
        }
        const double mean = sum / n;
        const double sigma = std::sqrt(sq / n - mean * mean);
        CHECK(sigma == doctest::Approx(expected).epsilon(0.05));
    }
    SUBCASE("fixed seed reproduces draws bit for bit") {
        DepthNoiseModel model;
        RngStream a(77), b(77);
        for (int i = 0; i < 100; ++i) {
            CHECK(apply_depth_noise(model, 2.5, a) == apply_depth_noise(model, 2.5, b));
        }
    }
}

TEST_CASE("camera presets") {
    struct Expected {
        CameraPreset preset;
        double hfov_deg;
        double vfov_deg;
    };
    const Expected table[] = {
        {CameraPreset::KinectV2, 70.6, 60.0},
        {CameraPreset::RealsenseD435, 87.0, 58.0},
        {CameraPreset::Zed2, 110.0, 70.0},
    };
    for (const auto& row : table) {
        const CameraModel cam = preset(row.preset);
        CHECK(cam.intrinsics.valid());
        // FoV implied by the intrinsics matches the documented value.
        const double deg = 180.0 / std::numbers::pi;
        CHECK(std::abs(cam.intrinsics.horizontal_fov() * deg - row.hfov_deg) < 0.5);
        CHECK(std::abs(cam.intrinsics.vertical_fov() * deg - row.vfov_deg) < 0.5);
        // Purity: repeated calls agree.
        const CameraModel again = preset(row.preset);
        CHECK(again.id == cam.id);
        CHECK(again.intrinsics.fx == cam.intrinsics.fx);
        CHECK(again.depth_noise.max_range == cam.depth_noise.max_range);
    }
    CHECK(camera_preset_from_name("kinect_v2") == CameraPreset::KinectV2);
    CHECK(!camera_preset_from_name("kinect_v3").has_value());
}
