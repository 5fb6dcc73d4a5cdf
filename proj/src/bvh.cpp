#include "skelsim/bvh.hpp"

#include "skelsim/errors.hpp"
#include "skelsim/numfmt.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace skelsim {

namespace {

constexpr std::array<std::string_view, 6> kChannelNames = {
    "Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation",
};

struct Token {
    std::string text;
    int line = 0;
};

std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> tokens;
    int line = 1;
    std::string current;
    int current_line = 1;
    for (const char c : text) {
        if (c == '\n' || c == '\r' || c == ' ' || c == '\t') {
            if (!current.empty()) {
                tokens.push_back({std::move(current), current_line});
                current.clear();
            }
            if (c == '\n') {
                ++line;
            }
        } else {
            if (current.empty()) {
                current_line = line;
            }
            current.push_back(c);
        }
    }
    if (!current.empty()) {
        tokens.push_back({std::move(current), current_line});
    }
    return tokens;
}

class Cursor {
public:
    explicit Cursor(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    bool done() const { return index_ >= tokens_.size(); }

    const Token& peek() const {
        if (done()) {
            throw ParseError("unexpected end of file", last_line());
        }
        return tokens_[index_];
    }

    Token next() {
        Token t = peek();
        ++index_;
        return t;
    }

    void expect(std::string_view word) {
        const Token t = next();
        if (t.text != word) {
            throw ParseError("expected '" + std::string(word) + "', found '" + t.text + "'",
                             t.line);
        }
    }

    double number() {
        const Token t = next();
        double value = 0.0;
        const char* begin = t.text.data();
        const char* end = begin + t.text.size();
        const auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc{} || ptr != end) {
            throw ParseError("expected a number, found '" + t.text + "'", t.line);
        }
        return value;
    }

    int last_line() const { return tokens_.empty() ? 0 : tokens_.back().line; }

private:
    std::vector<Token> tokens_;
    std::size_t index_ = 0;
};

BvhChannel channel_from_name(const Token& t) {
    for (std::size_t i = 0; i < kChannelNames.size(); ++i) {
        if (kChannelNames[i] == t.text) {
            return static_cast<BvhChannel>(i);
        }
    }
    throw ParseError("unknown channel '" + t.text + "'", t.line);
}

Vec3 parse_offset(Cursor& cur, double unit_scale) {
    cur.expect("OFFSET");
    const double x = cur.number();
    const double y = cur.number();
    const double z = cur.number();
    return Vec3{x, y, z} * unit_scale;
}

BvhJoint parse_joint(Cursor& cur, double unit_scale, std::set<std::string>& names) {
    const Token name = cur.next();
    if (!names.insert(name.text).second) {
        throw ParseError("duplicate joint name '" + name.text + "'", name.line);
    }
    BvhJoint joint;
    joint.name = name.text;
    cur.expect("{");
    joint.offset = parse_offset(cur, unit_scale);
    {
        const Token t = cur.peek();
        if (t.text == "CHANNELS") {
            cur.next();
            const Token count_tok = cur.peek();
            const int count = static_cast<int>(cur.number());
            if (count != 0 && count != 3 && count != 6) {
                throw ParseError("channel count must be 0, 3, or 6", count_tok.line);
            }
            for (int i = 0; i < count; ++i) {
                joint.channels.push_back(channel_from_name(cur.next()));
            }
        }
    }
    while (true) {
        const Token t = cur.peek();
        if (t.text == "JOINT") {
            cur.next();
            joint.children.push_back(parse_joint(cur, unit_scale, names));
        } else if (t.text == "End") {
            cur.next();
            cur.expect("Site");
            cur.expect("{");
            joint.end_site_offset = parse_offset(cur, unit_scale);
            cur.expect("}");
        } else if (t.text == "}") {
            cur.next();
            break;
        } else {
            throw ParseError("expected JOINT, End Site, or '}', found '" + t.text + "'",
                             t.line);
        }
    }
    return joint;
}

std::size_t count_channels(const BvhJoint& joint) {
    std::size_t n = joint.channels.size();
    for (const auto& child : joint.children) {
        n += count_channels(child);
    }
    return n;
}

void serialize_joint(std::ostringstream& out, const BvhJoint& joint, int depth,
                     double unit_scale, bool is_root) {
    const std::string indent(static_cast<std::size_t>(depth), '\t');
    out << indent << (is_root ? "ROOT " : "JOINT ") << joint.name << "\n";
    out << indent << "{\n";
    const Vec3 o = joint.offset / unit_scale;
    out << indent << "\tOFFSET " << format_double(o.x) << ' ' << format_double(o.y)
        << ' ' << format_double(o.z) << "\n";
    out << indent << "\tCHANNELS " << joint.channels.size();
    for (const BvhChannel c : joint.channels) {
        out << ' ' << bvh_channel_name(c);
    }
    out << "\n";
    for (const auto& child : joint.children) {
        serialize_joint(out, child, depth + 1, unit_scale, false);
    }
    if (joint.end_site_offset) {
        const Vec3 e = *joint.end_site_offset / unit_scale;
        out << indent << "\tEnd Site\n";
        out << indent << "\t{\n";
        out << indent << "\t\tOFFSET " << format_double(e.x) << ' ' << format_double(e.y)
            << ' ' << format_double(e.z) << "\n";
        out << indent << "\t}\n";
    }
    out << indent << "}\n";
}

// Stored rows already carry position channels in meters, so no unit scale
// is applied here.
void accumulate_fk(const BvhJoint& joint, const RigidTransform& parent,
                   std::span<const double> row, std::size_t& cursor,
                   std::map<std::string, Vec3>& out) {
    RigidTransform t = compose(parent, RigidTransform::translate(joint.offset));
    for (const BvhChannel c : joint.channels) {
        const double v = row[cursor++];
        switch (c) {
        case BvhChannel::Xposition:
            t = compose(t, RigidTransform::translate({v, 0, 0}));
            break;
        case BvhChannel::Yposition:
            t = compose(t, RigidTransform::translate({0, v, 0}));
            break;
        case BvhChannel::Zposition:
            t = compose(t, RigidTransform::translate({0, 0, v}));
            break;
        case BvhChannel::Xrotation:
            t = compose(t, RigidTransform::rotate(
                               Rotation::rot_x(v * std::numbers::pi / 180.0)));
            break;
        case BvhChannel::Yrotation:
            t = compose(t, RigidTransform::rotate(
                               Rotation::rot_y(v * std::numbers::pi / 180.0)));
            break;
        case BvhChannel::Zrotation:
            t = compose(t, RigidTransform::rotate(
                               Rotation::rot_z(v * std::numbers::pi / 180.0)));
            break;
        }
    }
    out[joint.name] = t.translation;
    for (const auto& child : joint.children) {
        accumulate_fk(child, t, row, cursor, out);
    }
}

} // namespace

std::string_view bvh_channel_name(BvhChannel c) {
    return kChannelNames[static_cast<std::size_t>(c)];
}

BvhClip parse_bvh(const std::string& text, double unit_scale) {
    Cursor cur(tokenize(text));
    if (cur.done() || cur.peek().text != "HIERARCHY") {
        throw ParseError("missing HIERARCHY section", cur.done() ? 0 : cur.peek().line);
    }
    cur.next();
    cur.expect("ROOT");
    std::set<std::string> names;
    BvhClip clip;
    clip.unit_scale = unit_scale;
    clip.root = parse_joint(cur, unit_scale, names);
    clip.channel_count = count_channels(clip.root);
    if (cur.done() || cur.peek().text != "MOTION") {
        throw ParseError("missing MOTION section", cur.done() ? cur.last_line() : cur.peek().line);
    }
    cur.next();
    cur.expect("Frames:");
    const Token frames_tok = cur.peek();
    const double frame_count_raw = cur.number();
    if (frame_count_raw < 1.0 || frame_count_raw != std::floor(frame_count_raw)) {
        throw ParseError("frame count must be a positive integer", frames_tok.line);
    }
    const auto frame_count = static_cast<std::size_t>(frame_count_raw);
    cur.expect("Frame");
    cur.expect("Time:");
    const Token ft_tok = cur.peek();
    clip.frame_time = cur.number();
    if (!(clip.frame_time > 0.0)) {
        throw ParseError("frame time must be positive", ft_tok.line);
    }
    clip.frames.reserve(frame_count);
    // Positional channel indices get the unit scale on read; rotations are
    // kept in degrees.
    std::vector<bool> positional(clip.channel_count, false);
    {
        std::size_t i = 0;
        // Depth-first in declaration order, matching accumulate_fk.
        auto mark = [&](auto&& self, const BvhJoint& j) -> void {
            for (const BvhChannel c : j.channels) {
                positional[i++] = c == BvhChannel::Xposition || c == BvhChannel::Yposition ||
                                  c == BvhChannel::Zposition;
            }
            for (const auto& child : j.children) {
                self(self, child);
            }
        };
        mark(mark, clip.root);
    }
    // One frame per line; the per-line count check is what catches
    // header/row channel mismatches with a useful location.
    for (std::size_t f = 0; f < frame_count; ++f) {
        if (cur.done()) {
            throw ParseError("expected " + std::to_string(frame_count) +
                                 " frame rows, found " + std::to_string(f),
                             cur.last_line());
        }
        const int row_line = cur.peek().line;
        std::vector<double> row(clip.channel_count);
        for (std::size_t c = 0; c < clip.channel_count; ++c) {
            if (cur.done() || cur.peek().line != row_line) {
                throw ParseError("frame row has " + std::to_string(c) +
                                     " values, expected " +
                                     std::to_string(clip.channel_count),
                                 row_line);
            }
            const double v = cur.number();
            row[c] = positional[c] ? v * unit_scale : v;
        }
        if (!cur.done() && cur.peek().line == row_line) {
            throw ParseError("frame row has more values than the declared " +
                                 std::to_string(clip.channel_count) + " channels",
                             row_line);
        }
        clip.frames.push_back(std::move(row));
    }
    if (!cur.done()) {
        throw ParseError("trailing data after the declared frames", cur.peek().line);
    }
    return clip;
}

std::string serialize_bvh(const BvhClip& clip) {
    std::ostringstream out;
    out << "HIERARCHY\n";
    serialize_joint(out, clip.root, 0, clip.unit_scale, true);
    out << "MOTION\n";
    out << "Frames: " << clip.frames.size() << "\n";
    out << "Frame Time: " << format_double(clip.frame_time) << "\n";
    std::vector<bool> positional;
    positional.reserve(clip.channel_count);
    auto mark = [&](auto&& self, const BvhJoint& j) -> void {
        for (const BvhChannel c : j.channels) {
            positional.push_back(c == BvhChannel::Xposition || c == BvhChannel::Yposition ||
                                 c == BvhChannel::Zposition);
        }
        for (const auto& child : j.children) {
            self(self, child);
        }
    };
    mark(mark, clip.root);
    for (const auto& row : clip.frames) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) {
                out << ' ';
            }
            out << format_double(positional[c] ? row[c] / clip.unit_scale : row[c]);
        }
        out << "\n";
    }
    return out.str();
}

std::map<std::string, Vec3> forward_kinematics_row(const BvhClip& clip,
                                                   std::span<const double> row) {
    if (row.size() != clip.channel_count) {
        throw std::invalid_argument("channel row width does not match the clip");
    }
    std::map<std::string, Vec3> out;
    std::size_t cursor = 0;
    accumulate_fk(clip.root, RigidTransform::identity(), row, cursor, out);
    return out;
}

std::map<std::string, Vec3> forward_kinematics(const BvhClip& clip,
                                               std::size_t frame_index) {
    if (frame_index >= clip.frames.size()) {
        throw std::out_of_range("frame index " + std::to_string(frame_index) +
                                " out of range (clip has " +
                                std::to_string(clip.frames.size()) + " frames)");
    }
    return forward_kinematics_row(clip, clip.frames[frame_index]);
}

SkeletonPose sample_pose(const BvhClip& clip, double t,
                         const RigidTransform& world_from_root,
                         const HarmonizationMap& map) {
    if (t < 0.0 || t > clip.duration() + 1e-12) {
        throw std::out_of_range("sample time outside the clip");
    }
    const double position = std::min(t / clip.frame_time,
                                     static_cast<double>(clip.frames.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(position));
    const std::size_t hi = std::min(lo + 1, clip.frames.size() - 1);
    const double alpha = position - static_cast<double>(lo);
    std::vector<double> row(clip.channel_count);
    for (std::size_t c = 0; c < clip.channel_count; ++c) {
        row[c] = (1.0 - alpha) * clip.frames[lo][c] + alpha * clip.frames[hi][c];
    }
    const auto raw = forward_kinematics_row(clip, row);
    SkeletonPose pose;
    pose.timestamp = t;
    pose.joints = harmonize(raw, map);
    for (auto& entry : pose.joints) {
        if (entry.present) {
            entry.position = transform_point(world_from_root, entry.position);
        }
    }
    return pose;
}

} // namespace skelsim
