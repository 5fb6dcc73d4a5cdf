#include "skelsim/skeleton.hpp"

#include "skelsim/errors.hpp"

#include <fstream>
#include <sstream>

namespace skelsim {

namespace {

constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "Nose",    "Neck",      "RShoulder", "RElbow",    "RWrist",
    "LShoulder", "LElbow",  "LWrist",    "MidHip",    "RHip",
    "RKnee",   "RAnkle",    "LHip",      "LKnee",     "LAnkle",
    "REye",    "LEye",      "REar",      "LEar",      "RBigToe",
    "RSmallToe", "RHeel",   "LBigToe",   "LSmallToe", "LHeel",
};

} // namespace

std::string_view joint_name(Joint j) {
    return kJointNames[static_cast<std::size_t>(j)];
}

std::optional<Joint> joint_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kJointCount; ++i) {
        if (kJointNames[i] == name) {
            return static_cast<Joint>(i);
        }
    }
    return std::nullopt;
}

std::array<Joint, kJointCount> all_joints() {
    std::array<Joint, kJointCount> out{};
    for (std::size_t i = 0; i < kJointCount; ++i) {
        out[i] = static_cast<Joint>(i);
    }
    return out;
}

HarmonizationMap::HarmonizationMap(std::map<std::string, Joint> source_to_canonical,
                                   std::map<Joint, Joint> fallbacks)
    : source_map_(std::move(source_to_canonical)), fallbacks_(std::move(fallbacks)) {
    // Reject cycles: every chain must terminate within kJointCount hops.
    for (const auto& [start, unused] : fallbacks_) {
        Joint j = start;
        for (std::size_t hops = 0;; ++hops) {
            auto it = fallbacks_.find(j);
            if (it == fallbacks_.end()) {
                break;
            }
            if (hops >= kJointCount) {
                throw std::invalid_argument(
                    "harmonization fallback graph has a cycle through " +
                    std::string(joint_name(start)));
            }
            j = it->second;
        }
    }
}

std::optional<Joint> HarmonizationMap::canonical_for(std::string_view source_name) const {
    auto it = source_map_.find(std::string(source_name));
    if (it == source_map_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<Joint> HarmonizationMap::fallback_for(Joint j) const {
    auto it = fallbacks_.find(j);
    if (it == fallbacks_.end()) {
        return std::nullopt;
    }
    return it->second;
}

HarmonizationMap HarmonizationMap::builtin_default() {
    std::map<std::string, Joint> sources = {
        {"Hips", Joint::MidHip},
        {"Neck", Joint::Neck},
        {"Head", Joint::Nose},
        {"LeftArm", Joint::LShoulder},
        {"LeftForeArm", Joint::LElbow},
        {"LeftHand", Joint::LWrist},
        {"RightArm", Joint::RShoulder},
        {"RightForeArm", Joint::RElbow},
        {"RightHand", Joint::RWrist},
        {"LeftUpLeg", Joint::LHip},
        {"LeftLeg", Joint::LKnee},
        {"LeftFoot", Joint::LAnkle},
        {"LeftToeBase", Joint::LBigToe},
        {"RightUpLeg", Joint::RHip},
        {"RightLeg", Joint::RKnee},
        {"RightFoot", Joint::RAnkle},
        {"RightToeBase", Joint::RBigToe},
    };
    std::map<Joint, Joint> fallbacks = {
        {Joint::Nose, Joint::Neck},
        {Joint::REye, Joint::Nose},
        {Joint::LEye, Joint::Nose},
        {Joint::REar, Joint::Nose},
        {Joint::LEar, Joint::Nose},
        {Joint::RBigToe, Joint::RAnkle},
        {Joint::LBigToe, Joint::LAnkle},
        {Joint::RSmallToe, Joint::RBigToe},
        {Joint::LSmallToe, Joint::LBigToe},
        {Joint::RHeel, Joint::RAnkle},
        {Joint::LHeel, Joint::LAnkle},
    };
    return HarmonizationMap(std::move(sources), std::move(fallbacks));
}

std::array<SkeletonPose::Entry, kJointCount> harmonize(
    const std::map<std::string, Vec3>& raw, const HarmonizationMap& map) {
    std::array<SkeletonPose::Entry, kJointCount> out{};
    // std::map iterates sources in lexicographic order, which pins the
    // duplicate-source rule.
    for (const auto& [name, position] : raw) {
        if (auto j = map.canonical_for(name)) {
            auto& e = out[static_cast<std::size_t>(*j)];
            e.position = position;
            e.present = true;
        }
    }
    for (std::size_t i = 0; i < kJointCount; ++i) {
        if (out[i].present) {
            continue;
        }
        Joint j = static_cast<Joint>(i);
        // Chains are acyclic by construction, so this terminates.
        while (auto fb = map.fallback_for(j)) {
            j = *fb;
            const auto& src = out[static_cast<std::size_t>(j)];
            if (src.present) {
                out[i].position = src.position;
                out[i].present = true;
                break;
            }
        }
    }
    return out;
}

HarmonizationMap load_harmonization_map(std::istream& in) {
    std::map<std::string, Joint> sources;
    std::map<Joint, Joint> fallbacks;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream row(line);
        std::string kind;
        if (!(row >> kind)) {
            continue; // blank
        }
        std::string a, b;
        if (!(row >> a >> b)) {
            throw ParseError("expected two names after '" + kind + "'", line_no);
        }
        std::string extra;
        if (row >> extra) {
            throw ParseError("unexpected trailing token '" + extra + "'", line_no);
        }
        if (kind == "map") {
            const auto canonical = joint_from_name(b);
            if (!canonical) {
                throw ParseError("unknown canonical joint '" + b + "'", line_no);
            }
            sources[a] = *canonical;
        } else if (kind == "fallback") {
            const auto from = joint_from_name(a);
            const auto to = joint_from_name(b);
            if (!from || !to) {
                throw ParseError("unknown canonical joint in fallback", line_no);
            }
            fallbacks[*from] = *to;
        } else {
            throw ParseError("unknown directive '" + kind + "'", line_no);
        }
    }
    return HarmonizationMap(std::move(sources), std::move(fallbacks));
}

HarmonizationMap load_harmonization_map_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open harmonization map: " + path);
    }
    return load_harmonization_map(in);
}

} // namespace skelsim
