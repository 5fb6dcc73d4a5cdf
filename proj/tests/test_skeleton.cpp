#include "skelsim/skeleton.hpp"

#include "skelsim/errors.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <stdexcept>

#include <map>
#include <sstream>

using namespace skelsim;
using skelsim::test::vec_near;

TEST_CASE("canonical joint names round trip") {
    int count = 0;
    for (const Joint j : all_joints()) {
        const auto back = joint_from_name(joint_name(j));
        REQUIRE(back.has_value());
        CHECK(*back == j);
        ++count;
    }
    CHECK(count == 25);
    CHECK(!joint_from_name("Elbow").has_value());
}

TEST_CASE("harmonize maps sources and applies wrist-riding hands") {
    HarmonizationMap map({{"RightWrist", Joint::RWrist}}, {});
    const Vec3 p{0.4, -0.2, 0.9};
    const auto joints = harmonize({{"RightWrist", p}}, map);

    CHECK(joints[static_cast<std::size_t>(Joint::RWrist)].present);
    CHECK(vec_near(joints[static_cast<std::size_t>(Joint::RWrist)].position, p, 0.0));

    // Hands are not separate canonical keypoints; they follow the wrist.
    SkeletonPose pose;
    pose.joints = joints;
    CHECK(pose.hand(true).present);
    CHECK(vec_near(pose.hand(true).position, p, 0.0));
    CHECK(!pose.hand(false).present);
}

TEST_CASE("harmonize with empty input leaves everything absent") {
    const auto joints = harmonize({}, HarmonizationMap::builtin_default());
    for (const auto& e : joints) {
        CHECK(!e.present);
    }
}

TEST_CASE("harmonize full passthrough copies positions verbatim") {
    std::map<std::string, Joint> sources;
    std::map<std::string, Vec3> raw;
    double v = 0.0;
    for (const Joint j : all_joints()) {
        sources[std::string(joint_name(j))] = j;
        raw[std::string(joint_name(j))] = {v, v + 1, v + 2};
        v += 3.0;
    }
    HarmonizationMap map(std::move(sources), {});
    const auto joints = harmonize(raw, map);
    for (const Joint j : all_joints()) {
        const auto& e = joints[static_cast<std::size_t>(j)];
        REQUIRE(e.present);
        CHECK(vec_near(e.position, raw.at(std::string(joint_name(j))), 0.0));
    }
}

TEST_CASE("fallback chains copy positions from present relatives") {
    // REye -> Nose -> Neck: only Neck is sourced, both fall back to it.
    HarmonizationMap map({{"neck", Joint::Neck}},
                         {{Joint::REye, Joint::Nose}, {Joint::Nose, Joint::Neck}});
    const Vec3 p{1, 2, 3};
    const auto joints = harmonize({{"neck", p}}, map);
    CHECK(vec_near(joints[static_cast<std::size_t>(Joint::Nose)].position, p, 0.0));
    CHECK(vec_near(joints[static_cast<std::size_t>(Joint::REye)].position, p, 0.0));
    CHECK(!joints[static_cast<std::size_t>(Joint::LEar)].present);
}

TEST_CASE("harmonize never invents positions") {
    RngStream rng(13);
    std::map<std::string, Vec3> raw;
    for (int i = 0; i < 8; ++i) {
        raw["src" + std::to_string(i)] = skelsim::test::random_vec(rng, 2.0);
    }
    std::map<std::string, Joint> sources{{"src0", Joint::Neck},
                                         {"src3", Joint::MidHip},
                                         {"src5", Joint::RWrist}};
    HarmonizationMap map(std::move(sources),
                         {{Joint::Nose, Joint::Neck}, {Joint::RHip, Joint::MidHip}});
    const auto joints = harmonize(raw, map);
    for (const auto& e : joints) {
        if (!e.present) {
            continue;
        }
        bool found = false;
        for (const auto& [name, p] : raw) {
            if (vec_near(p, e.position, 0.0)) {
                found = true;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("fallback cycles are rejected") {
    CHECK_THROWS_AS(HarmonizationMap({}, {{Joint::Nose, Joint::Neck},
                                          {Joint::Neck, Joint::Nose}}),
                    std::invalid_argument);
}

TEST_CASE("harmonization map text format") {
    std::istringstream in(
        "# comment\n"
        "map Hips MidHip\n"
        "map RightHand RWrist   # trailing comment\n"
        "fallback REye Nose\n"
        "\n");
    const HarmonizationMap map = load_harmonization_map(in);
    CHECK(map.canonical_for("Hips") == Joint::MidHip);
    CHECK(map.canonical_for("RightHand") == Joint::RWrist);
    CHECK(map.fallback_for(Joint::REye) == Joint::Nose);
    CHECK(!map.canonical_for("nothing").has_value());
}

TEST_CASE("harmonization map parse errors") {
    std::istringstream bad_joint("map Hips NotAJoint\n");
    CHECK_THROWS_WITH_AS(load_harmonization_map(bad_joint),
                         doctest::Contains("unknown canonical joint"), ParseError);
    std::istringstream bad_directive("alias A B\n");
    CHECK_THROWS_WITH_AS(load_harmonization_map(bad_directive),
                         doctest::Contains("unknown directive"), ParseError);
    std::istringstream short_line("map OnlyOne\n");
    CHECK_THROWS_AS(load_harmonization_map(short_line), ParseError);
}

TEST_CASE("builtin default covers the main body and leaves sensible fallbacks") {
    const HarmonizationMap map = HarmonizationMap::builtin_default();
    CHECK(map.canonical_for("Hips") == Joint::MidHip);
    CHECK(map.canonical_for("RightHand") == Joint::RWrist);
    CHECK(map.fallback_for(Joint::REye) == Joint::Nose);
    CHECK(map.fallback_for(Joint::RHeel) == Joint::RAnkle);
}
