#include "skelsim/config.hpp"

#include "skelsim/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace skelsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ParseError(path + ": " + message);
}

void ensure_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed) {
    for (const auto& [key, unused] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            fail(path + "." + key, "unknown key");
        }
    }
}

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double as_double(const json& node, const std::string& path) {
    if (!node.is_number()) {
        fail(path, "expected a number");
    }
    return node.get<double>();
}

double positive(const json& node, const std::string& path) {
    const double v = as_double(node, path);
    if (!(v > 0.0)) {
        fail(path, "must be positive");
    }
    return v;
}

double non_negative(const json& node, const std::string& path) {
    const double v = as_double(node, path);
    if (v < 0.0) {
        fail(path, "must not be negative");
    }
    return v;
}

std::string as_string(const json& node, const std::string& path) {
    if (!node.is_string()) {
        fail(path, "expected a string");
    }
    return node.get<std::string>();
}

Vec3 as_vec3(const json& node, const std::string& path) {
    if (!node.is_array() || node.size() != 3) {
        fail(path, "expected [x, y, z]");
    }
    return {as_double(node[0], path + "[0]"), as_double(node[1], path + "[1]"),
            as_double(node[2], path + "[2]")};
}

Rotation rpy_deg_to_rotation(const Vec3& rpy) {
    const double d = std::numbers::pi / 180.0;
    return Rotation::rot_z(rpy.z * d) * Rotation::rot_y(rpy.y * d) *
           Rotation::rot_x(rpy.x * d);
}

RigidTransform parse_pose(const json& obj, const std::string& path) {
    ensure_keys(obj, path, {"position", "rpy_deg"});
    RigidTransform pose;
    if (const json* p = find(obj, "position")) {
        pose.translation = as_vec3(*p, path + ".position");
    }
    if (const json* r = find(obj, "rpy_deg")) {
        pose.rotation = rpy_deg_to_rotation(as_vec3(*r, path + ".rpy_deg"));
    }
    return pose;
}

CameraModel parse_camera(const json& obj, const std::string& path) {
    ensure_keys(obj, path,
                {"id", "preset", "intrinsics", "position", "look_at", "up",
                 "pixel_noise_sigma", "depth_noise"});
    const json* id = find(obj, "id");
    if (!id) {
        fail(path + ".id", "missing required field");
    }
    CameraModel cam;
    const json* preset_node = find(obj, "preset");
    const json* intr_node = find(obj, "intrinsics");
    if ((preset_node == nullptr) == (intr_node == nullptr)) {
        fail(path, "exactly one of 'preset' or 'intrinsics' is required");
    }
    if (preset_node) {
        const std::string name = as_string(*preset_node, path + ".preset");
        const auto p = camera_preset_from_name(name);
        if (!p) {
            fail(path + ".preset", "unknown camera preset '" + name + "'");
        }
        cam = preset(*p);
    } else {
        const std::string ipath = path + ".intrinsics";
        ensure_keys(*intr_node, ipath, {"fx", "fy", "cx", "cy", "width", "height"});
        for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"}) {
            if (!find(*intr_node, key)) {
                fail(ipath + "." + key, "missing required field");
            }
        }
        cam.intrinsics.fx = positive((*intr_node)["fx"], ipath + ".fx");
        cam.intrinsics.fy = positive((*intr_node)["fy"], ipath + ".fy");
        cam.intrinsics.cx = as_double((*intr_node)["cx"], ipath + ".cx");
        cam.intrinsics.cy = as_double((*intr_node)["cy"], ipath + ".cy");
        cam.intrinsics.width =
            static_cast<int>(positive((*intr_node)["width"], ipath + ".width"));
        cam.intrinsics.height =
            static_cast<int>(positive((*intr_node)["height"], ipath + ".height"));
        if (!cam.intrinsics.valid()) {
            fail(ipath, "principal point must lie strictly inside the image");
        }
    }
    cam.id = as_string(*id, path + ".id");
    if (cam.id.empty()) {
        fail(path + ".id", "must not be empty");
    }

    const json* position = find(obj, "position");
    if (!position) {
        fail(path + ".position", "missing required field");
    }
    const Vec3 eye = as_vec3(*position, path + ".position");
    const json* look = find(obj, "look_at");
    if (!look) {
        fail(path + ".look_at", "missing required field");
    }
    const Vec3 target = as_vec3(*look, path + ".look_at");
    Vec3 up{0.0, 0.0, 1.0};
    if (const json* u = find(obj, "up")) {
        up = as_vec3(*u, path + ".up");
    }
    try {
        cam.world_from_camera = look_at(eye, target, up);
    } catch (const DegenerateGeometryError& e) {
        fail(path, e.what());
    }

    if (const json* s = find(obj, "pixel_noise_sigma")) {
        cam.pixel_noise_sigma = non_negative(*s, path + ".pixel_noise_sigma");
    }
    if (const json* dn = find(obj, "depth_noise")) {
        const std::string dpath = path + ".depth_noise";
        ensure_keys(*dn, dpath, {"sigma0", "sigma1", "max_range"});
        if (const json* v = find(*dn, "sigma0")) {
            cam.depth_noise.sigma0 = non_negative(*v, dpath + ".sigma0");
        }
        if (const json* v = find(*dn, "sigma1")) {
            cam.depth_noise.sigma1 = non_negative(*v, dpath + ".sigma1");
        }
        if (const json* v = find(*dn, "max_range")) {
            cam.depth_noise.max_range = positive(*v, dpath + ".max_range");
        }
    }
    return cam;
}

CalibrationProp parse_prop(const json& node, const std::string& path) {
    if (node.is_string()) {
        const std::string name = node.get<std::string>();
        const auto p = prop_from_name(name);
        if (!p) {
            fail(path, "unknown prop '" + name + "' (expected planar_square or cluster8)");
        }
        return *p;
    }
    if (!node.is_object()) {
        fail(path, "expected a prop name or an object");
    }
    ensure_keys(node, path, {"name", "planar", "points"});
    CalibrationProp prop;
    if (const json* n = find(node, "name")) {
        prop.name = as_string(*n, path + ".name");
    } else {
        prop.name = "custom";
    }
    if (const json* pl = find(node, "planar")) {
        if (!pl->is_boolean()) {
            fail(path + ".planar", "expected a boolean");
        }
        prop.planar = pl->get<bool>();
    }
    const json* points = find(node, "points");
    if (!points || !points->is_array()) {
        fail(path + ".points", "missing required field");
    }
    for (std::size_t i = 0; i < points->size(); ++i) {
        prop.fiducial_points.push_back(
            as_vec3((*points)[i], path + ".points[" + std::to_string(i) + "]"));
    }
    try {
        validate_prop(prop);
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
    return prop;
}

json parse_document(const std::string& document) {
    try {
        return json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
}

SceneConfig scene_from_json(const json& root) {
    if (!root.is_object()) {
        throw ParseError("config root must be an object");
    }
    ensure_keys(root, "config",
                {"cameras", "actor", "prop", "anchor", "frame_rate", "duration", "seed",
                 "capsule_radii", "detector", "appearance", "calibration", "teleop"});

    SceneConfig scene;
    const json* cameras = find(root, "cameras");
    if (!cameras || !cameras->is_array() || cameras->empty()) {
        fail("config.cameras", "missing required field (need at least one camera)");
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < cameras->size(); ++i) {
        const std::string path = "config.cameras[" + std::to_string(i) + "]";
        if (!(*cameras)[i].is_object()) {
            fail(path, "expected an object");
        }
        CameraModel cam = parse_camera((*cameras)[i], path);
        if (!ids.insert(cam.id).second) {
            fail(path + ".id", "duplicate camera id '" + cam.id + "'");
        }
        scene.cameras.push_back(std::move(cam));
    }

    if (const json* actor = find(root, "actor")) {
        const std::string path = "config.actor";
        ensure_keys(*actor, path, {"motion", "position", "rpy_deg"});
        if (const json* motion = find(*actor, "motion")) {
            if (motion->is_string()) {
                const std::string name = motion->get<std::string>();
                scene.synth_kind.reset();
                for (const MotionKind kind :
                     {MotionKind::Stand, MotionKind::WaveRightArm, MotionKind::WriteVico}) {
                    if (motion_kind_name(kind) == name) {
                        scene.synth_kind = kind;
                    }
                }
                if (!scene.synth_kind) {
                    fail(path + ".motion", "unknown motion kind '" + name + "'");
                }
            } else if (motion->is_object()) {
                ensure_keys(*motion, path + ".motion", {"bvh", "unit_scale", "harmonization"});
                const json* bvh = find(*motion, "bvh");
                if (!bvh) {
                    fail(path + ".motion.bvh", "missing required field");
                }
                scene.bvh_path = as_string(*bvh, path + ".motion.bvh");
                scene.synth_kind.reset();
                if (const json* scale = find(*motion, "unit_scale")) {
                    scene.bvh_unit_scale = positive(*scale, path + ".motion.unit_scale");
                }
                std::ifstream probe(*scene.bvh_path);
                if (!probe) {
                    fail(path + ".motion.bvh",
                         "motion file is not readable: " + *scene.bvh_path);
                }
                if (const json* h = find(*motion, "harmonization")) {
                    scene.harmonization_path =
                        as_string(*h, path + ".motion.harmonization");
                    std::ifstream hprobe(*scene.harmonization_path);
                    if (!hprobe) {
                        fail(path + ".motion.harmonization",
                             "harmonization map is not readable: " +
                                 *scene.harmonization_path);
                    }
                }
            } else {
                fail(path + ".motion", "expected a motion kind or {\"bvh\": path}");
            }
        }
        RigidTransform pose;
        if (const json* p = find(*actor, "position")) {
            pose.translation = as_vec3(*p, path + ".position");
        }
        if (const json* r = find(*actor, "rpy_deg")) {
            pose.rotation = rpy_deg_to_rotation(as_vec3(*r, path + ".rpy_deg"));
        }
        scene.world_from_root = pose;
    }

    if (const json* prop = find(root, "prop")) {
        scene.prop = parse_prop(*prop, "config.prop");
    } else {
        scene.prop = cluster8_prop();
    }

    {
        RigidTransform anchor_pose{Rotation::rot_y(std::numbers::pi / 2.0),
                                   Vec3{0.0, 0.0, 0.55}};
        double size = 0.25;
        if (const json* anchor = find(root, "anchor")) {
            const std::string path = "config.anchor";
            ensure_keys(*anchor, path, {"position", "rpy_deg", "size"});
            if (const json* p = find(*anchor, "position")) {
                anchor_pose.translation = as_vec3(*p, path + ".position");
            }
            if (const json* r = find(*anchor, "rpy_deg")) {
                anchor_pose.rotation =
                    rpy_deg_to_rotation(as_vec3(*r, path + ".rpy_deg"));
            }
            if (const json* s = find(*anchor, "size")) {
                size = positive(*s, path + ".size");
            }
        }
        CalibrationProp marker;
        marker.name = "anchor_marker";
        marker.planar = true;
        const double h = size / 2.0;
        marker.fiducial_points = {{-h, -h, 0.0}, {h, -h, 0.0}, {h, h, 0.0}, {-h, h, 0.0}};
        scene.anchor = make_world_anchor(marker, anchor_pose);
    }

    if (const json* fr = find(root, "frame_rate")) {
        scene.frame_rate = positive(*fr, "config.frame_rate");
    }
    if (const json* d = find(root, "duration")) {
        scene.duration = positive(*d, "config.duration");
    }
    if (const json* seed = find(root, "seed")) {
        if (!seed->is_number_unsigned() &&
            !(seed->is_number_integer() && seed->get<long long>() >= 0)) {
            fail("config.seed", "expected an unsigned integer");
        }
        scene.master_seed = seed->get<std::uint64_t>();
    }

    if (const json* radii = find(root, "capsule_radii")) {
        const auto known = default_capsule_radii();
        for (const auto& [key, value] : radii->items()) {
            if (!known.count(key)) {
                fail("config.capsule_radii." + key, "unknown bone category");
            }
            scene.capsule_radii[key] = positive(value, "config.capsule_radii." + key);
        }
    }

    if (const json* det = find(root, "detector")) {
        const std::string path = "config.detector";
        ensure_keys(*det, path, {"sigma_px", "p_miss", "min_confidence", "lift_mode"});
        if (const json* v = find(*det, "sigma_px")) {
            scene.detector.sigma_px = non_negative(*v, path + ".sigma_px");
        }
        if (const json* v = find(*det, "p_miss")) {
            scene.detector.p_miss = as_double(*v, path + ".p_miss");
            if (scene.detector.p_miss < 0.0 || scene.detector.p_miss >= 1.0) {
                fail(path + ".p_miss", "must lie in [0, 1)");
            }
        }
        if (const json* v = find(*det, "min_confidence")) {
            scene.detector.min_confidence = non_negative(*v, path + ".min_confidence");
        }
        if (const json* v = find(*det, "lift_mode")) {
            const std::string name = as_string(*v, path + ".lift_mode");
            const auto mode = lift_mode_from_name(name);
            if (!mode) {
                fail(path + ".lift_mode",
                     "expected depth_lookup or direct_depth, got '" + name + "'");
            }
            scene.detector.lift_mode = *mode;
        }
    }

    if (const json* app = find(root, "appearance")) {
        for (const auto& [key, value] : app->items()) {
            if (!value.is_string()) {
                fail("config.appearance." + key, "expected a string label");
            }
            scene.appearance[key] = value.get<std::string>();
        }
    }

    if (!(scene.frame_rate * scene.duration >= 1.0)) {
        fail("config.duration", "frame_rate * duration must cover at least one frame");
    }
    return scene;
}

} // namespace

SceneConfig parse_scene_config(const std::string& document) {
    return scene_from_json(parse_document(document));
}

ExperimentConfig parse_experiment_config(const std::string& document) {
    const json root = parse_document(document);
    ExperimentConfig config;
    config.scene = scene_from_json(root);
    config.calibration.master_seed = config.scene.master_seed;

    if (const json* calib = find(root, "calibration")) {
        const std::string path = "config.calibration";
        ensure_keys(*calib, path,
                    {"radii", "props", "camera_count", "frames", "pixel_noise_sigma",
                     "trials", "refine"});
        if (const json* radii = find(*calib, "radii")) {
            if (!radii->is_array() || radii->empty()) {
                fail(path + ".radii", "expected a non-empty array of radii");
            }
            config.calibration.radii.clear();
            for (std::size_t i = 0; i < radii->size(); ++i) {
                config.calibration.radii.push_back(
                    positive((*radii)[i], path + ".radii[" + std::to_string(i) + "]"));
            }
        }
        if (const json* props = find(*calib, "props")) {
            if (!props->is_array() || props->empty()) {
                fail(path + ".props", "expected a non-empty array");
            }
            config.calibration.props.clear();
            for (std::size_t i = 0; i < props->size(); ++i) {
                config.calibration.props.push_back(
                    parse_prop((*props)[i], path + ".props[" + std::to_string(i) + "]"));
            }
        }
        if (const json* v = find(*calib, "camera_count")) {
            config.calibration.camera_count =
                static_cast<int>(positive(*v, path + ".camera_count"));
        }
        if (const json* v = find(*calib, "frames")) {
            config.calibration.frames = static_cast<int>(positive(*v, path + ".frames"));
        }
        if (const json* v = find(*calib, "pixel_noise_sigma")) {
            config.calibration.pixel_noise_sigma =
                non_negative(*v, path + ".pixel_noise_sigma");
        }
        if (const json* v = find(*calib, "trials")) {
            config.calibration.trials = static_cast<int>(positive(*v, path + ".trials"));
        }
        if (const json* v = find(*calib, "refine")) {
            if (!v->is_boolean()) {
                fail(path + ".refine", "expected a boolean");
            }
            config.calibration.refine = v->get<bool>();
        }
    }

    if (const json* teleop = find(root, "teleop")) {
        const std::string path = "config.teleop";
        ensure_keys(*teleop, path,
                    {"mass", "stiffness", "damping", "scale", "dropout_policy", "ee_home",
                     "substep_rate", "startup_window"});
        double mass = config.teleop.impedance.mass;
        double stiffness = config.teleop.impedance.stiffness;
        std::optional<double> damping;
        if (const json* v = find(*teleop, "mass")) {
            mass = positive(*v, path + ".mass");
        }
        if (const json* v = find(*teleop, "stiffness")) {
            stiffness = positive(*v, path + ".stiffness");
        }
        if (const json* v = find(*teleop, "damping")) {
            damping = non_negative(*v, path + ".damping");
        }
        config.teleop.impedance = ImpedanceParams::critically_damped(mass, stiffness);
        if (damping) {
            config.teleop.impedance.damping = *damping;
        }
        if (const json* v = find(*teleop, "scale")) {
            config.teleop.scale = positive(*v, path + ".scale");
        }
        if (const json* v = find(*teleop, "dropout_policy")) {
            const std::string name = as_string(*v, path + ".dropout_policy");
            const auto policy = dropout_policy_from_name(name);
            if (!policy) {
                fail(path + ".dropout_policy",
                     "expected hold, freeze, or abort, got '" + name + "'");
            }
            config.teleop.dropout = *policy;
        }
        if (const json* v = find(*teleop, "ee_home")) {
            config.teleop.ee_home = as_vec3(*v, path + ".ee_home");
        }
        if (const json* v = find(*teleop, "substep_rate")) {
            config.teleop.substep_rate = positive(*v, path + ".substep_rate");
        }
        if (const json* v = find(*teleop, "startup_window")) {
            config.teleop.startup_window = positive(*v, path + ".startup_window");
        }
    }
    return config;
}

MotionSource make_motion_source(const SceneConfig& scene) {
    if (scene.bvh_path) {
        std::ifstream in(*scene.bvh_path);
        if (!in) {
            throw IoError("cannot open motion file: " + *scene.bvh_path);
        }
        std::ostringstream text;
        text << in.rdbuf();
        BvhClip clip = parse_bvh(text.str(), scene.bvh_unit_scale);
        HarmonizationMap map = scene.harmonization_path
                                   ? load_harmonization_map_file(*scene.harmonization_path)
                                   : HarmonizationMap::builtin_default();
        return MotionSource::from_bvh(std::move(clip), scene.world_from_root,
                                      std::move(map));
    }
    return MotionSource::synthesized(scene.synth_kind.value_or(MotionKind::Stand),
                                     scene.world_from_root);
}

} // namespace skelsim
