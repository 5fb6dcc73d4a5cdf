#pragma once

#include "skelsim/geometry.hpp"

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace skelsim {

/// The canonical 25-keypoint set every tracker output is harmonized onto
/// (body, feet, and head keypoints). The full table lives in
/// docs/canonical_joints.md. Hands are not separate keypoints: they ride
/// the wrist, so the wrist entries double as the hand keypoints.
enum class Joint : std::size_t {
    Nose,
    Neck,
    RShoulder,
    RElbow,
    RWrist,
    LShoulder,
    LElbow,
    LWrist,
    MidHip,
    RHip,
    RKnee,
    RAnkle,
    LHip,
    LKnee,
    LAnkle,
    REye,
    LEye,
    REar,
    LEar,
    RBigToe,
    RSmallToe,
    RHeel,
    LBigToe,
    LSmallToe,
    LHeel,
};

inline constexpr std::size_t kJointCount = 25;

std::string_view joint_name(Joint j);
std::optional<Joint> joint_from_name(std::string_view name);
std::array<Joint, kJointCount> all_joints();

/// Timestamped snapshot of the canonical skeleton in world coordinates.
/// Absence is a value: a joint with present == false carries no position.
struct SkeletonPose {
    struct Entry {
        Vec3 position;
        bool present = false;
    };

    double timestamp = 0.0; // seconds
    std::array<Entry, kJointCount> joints{};

    const Entry& operator[](Joint j) const { return joints[static_cast<std::size_t>(j)]; }
    Entry& operator[](Joint j) { return joints[static_cast<std::size_t>(j)]; }

    void set(Joint j, const Vec3& p) {
        auto& e = (*this)[j];
        e.position = p;
        e.present = true;
    }

    /// Hand keypoints follow the wrist: this is the wrist entry of the
    /// requested side (right = true).
    const Entry& hand(bool right) const {
        return (*this)[right ? Joint::RWrist : Joint::LWrist];
    }
};

/// Renaming rules from a source skeleton (e.g. a BVH rig) onto the
/// canonical set, plus per-joint fallbacks for canonical joints the source
/// does not carry (eyes/ears fall back toward the nose, toes to the ankle,
/// and so on). The fallback graph must be acyclic.
class HarmonizationMap {
public:
    HarmonizationMap() = default;

    /// Throws std::invalid_argument if the fallback graph has a cycle.
    HarmonizationMap(std::map<std::string, Joint> source_to_canonical,
                     std::map<Joint, Joint> fallbacks);

    /// Mapping for a Mixamo/CMU-style BVH naming scheme; other schemes are
    /// user-supplied via load_harmonization_map.
    static HarmonizationMap builtin_default();

    const std::map<std::string, Joint>& source_map() const { return source_map_; }
    const std::map<Joint, Joint>& fallbacks() const { return fallbacks_; }

    std::optional<Joint> canonical_for(std::string_view source_name) const;
    std::optional<Joint> fallback_for(Joint j) const;

private:
    std::map<std::string, Joint> source_map_;
    std::map<Joint, Joint> fallbacks_;
};

/// Copies mapped joints under their canonical names, then resolves missing
/// canonical joints through fallback chains. Every emitted position equals
/// some input position exactly; joints with neither mapping nor reachable
/// fallback stay absent. When several sources map to one canonical joint,
/// the lexicographically last source name wins.
std::array<SkeletonPose::Entry, kJointCount> harmonize(
    const std::map<std::string, Vec3>& raw, const HarmonizationMap& map);

/// Text format, one directive per line:
///   map <source_name> <canonical_name>
///   fallback <canonical_name> <canonical_name>
/// '#' starts a comment. Throws ParseError with line numbers.
HarmonizationMap load_harmonization_map(std::istream& in);
HarmonizationMap load_harmonization_map_file(const std::string& path);

} // namespace skelsim
