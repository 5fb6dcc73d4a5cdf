#include "skelsim/export.hpp"

#include "skelsim/errors.hpp"
#include "skelsim/numfmt.hpp"
#include "skelsim/parallel.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace skelsim {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

std::string num(double v) { return format_double(v, 9); }

json pose_to_json(const RigidTransform& t) {
    return json{{"rotation_wxyz",
                 {t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z}},
                {"translation", {t.translation.x, t.translation.y, t.translation.z}}};
}

} // namespace

std::string config_digest_hex(const std::string& config_text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : config_text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
    json doc{{"tool_version", manifest.tool_version},
             {"config_digest", manifest.config_digest},
             {"master_seed", manifest.master_seed},
             {"subcommand", manifest.subcommand},
             {"started_at", manifest.started_at},
             {"finished_at", manifest.finished_at},
             {"outputs", manifest.outputs}};
    auto out = open_out(path);
    out << doc.dump(2) << "\n";
    finish(out, path);
}

void write_metrics_csv(const ExperimentReport& report, const std::string& path) {
    if (report.empty()) {
        throw std::invalid_argument("write_metrics_csv: empty report");
    }
    auto out = open_out(path);
    out << "radius_m,prop,trial,mean_trans_err_m,mean_rot_err_rad\n";
    for (const ExperimentRow& row : report) {
        out << num(row.radius_m) << ',' << row.prop << ',' << row.trial << ','
            << num(row.mean_trans_err_m) << ',' << num(row.mean_rot_err_rad) << "\n";
    }
    finish(out, path);
}

void write_metrics_csv(const TrackingMetrics& metrics, const std::string& path) {
    if (metrics.per_source.empty()) {
        throw std::invalid_argument("write_metrics_csv: empty report");
    }
    auto out = open_out(path);
    out << "source,joint,rmse_m,detection_rate,frames\n";
    for (const auto& [source, joints] : metrics.per_source) {
        for (std::size_t ji = 0; ji < kJointCount; ++ji) {
            const JointSourceMetrics& m = joints[ji];
            out << source << ',' << joint_name(static_cast<Joint>(ji)) << ','
                << (m.rmse ? num(*m.rmse) : "") << ',' << num(m.detection_rate) << ','
                << m.frames << "\n";
        }
    }
    finish(out, path);
}

void write_tracking_frames_csv(std::span<const TrackedFrame> frames,
                               const std::string& path) {
    if (frames.empty()) {
        throw std::invalid_argument("write_tracking_frames_csv: no frames");
    }
    auto out = open_out(path);
    out << "frame,t_s,source,joint,present,x,y,z,gt_x,gt_y,gt_z,conf\n";
    auto row = [&](int frame, double t, const std::string& source, Joint j, bool present,
                   const Vec3& p, const SkeletonPose::Entry& truth, double conf,
                   bool has_conf) {
        out << frame << ',' << num(t) << ',' << source << ',' << joint_name(j) << ','
            << (present ? 1 : 0) << ',';
        if (present) {
            out << num(p.x) << ',' << num(p.y) << ',' << num(p.z) << ',';
        } else {
            out << ",,,";
        }
        if (truth.present) {
            out << num(truth.position.x) << ',' << num(truth.position.y) << ','
                << num(truth.position.z) << ',';
        } else {
            out << ",,,";
        }
        if (has_conf && present) {
            out << num(conf);
        }
        out << "\n";
    };
    for (const TrackedFrame& frame : frames) {
        for (const auto& est : frame.per_camera) {
            for (const Joint j : all_joints()) {
                const auto& e = est.joints[static_cast<std::size_t>(j)];
                row(frame.frame_id, frame.t, est.camera_id, j, e.present, e.position,
                    frame.truth[j], e.confidence, true);
            }
        }
        for (const Joint j : all_joints()) {
            const auto& f = frame.fused.joints[static_cast<std::size_t>(j)];
            row(frame.frame_id, frame.t, kFusedSourceName, j, f.present, f.position,
                frame.truth[j], 0.0, false);
        }
    }
    finish(out, path);
}

void write_teleop_trace_csv(const TeleopTrace& trace, const std::string& path) {
    if (trace.samples.empty()) {
        throw std::invalid_argument("write_teleop_trace_csv: empty trace");
    }
    auto out = open_out(path);
    out << "t_s,des_x,des_y,des_z,act_x,act_y,act_z\n";
    for (const TeleopSample& s : trace.samples) {
        out << num(s.t) << ',' << num(s.desired.x) << ',' << num(s.desired.y) << ','
            << num(s.desired.z) << ',' << num(s.actual.x) << ',' << num(s.actual.y) << ','
            << num(s.actual.z) << "\n";
    }
    finish(out, path);
}

void write_reference_path_csv(const std::vector<Vec3>& path, const std::string& file) {
    if (path.empty()) {
        throw std::invalid_argument("write_reference_path_csv: empty path");
    }
    auto out = open_out(file);
    out << "seg,x,y,z\n";
    for (std::size_t i = 0; i < path.size(); ++i) {
        out << i << ',' << num(path[i].x) << ',' << num(path[i].y) << ','
            << num(path[i].z) << "\n";
    }
    finish(out, file);
}

void write_observation_dump(std::span<const FiducialObservation> observations,
                            const std::string& path) {
    auto out = open_out(path);
    for (const auto& o : observations) {
        const json rec{{"frame_id", o.frame_id},
                       {"camera_id", o.camera_id},
                       {"point_id", o.point_id},
                       {"u", o.u},
                       {"v", o.v}};
        out << rec.dump() << "\n";
    }
    finish(out, path);
}

namespace {

void write_depth_pgm(const CameraModel& cam, std::span<const Capsule> capsules,
                     RngStream& rng, const std::string& path) {
    const int w = cam.intrinsics.width;
    const int h = cam.intrinsics.height;
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 2, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto z = depth_at_pixel(cam, x + 0.5, y + 0.5, capsules, rng);
            if (!z) {
                continue;
            }
            const auto mm = static_cast<unsigned>(
                std::min(65535.0, std::max(0.0, *z * 1000.0 + 0.5)));
            const std::size_t i = 2 * (static_cast<std::size_t>(y) * w + x);
            bytes[i] = static_cast<unsigned char>(mm >> 8);
            bytes[i + 1] = static_cast<unsigned char>(mm & 0xff);
        }
    }
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << "P5\n" << w << ' ' << h << "\n65535\n";
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    finish(out, path);
}

} // namespace

DatasetExportResult export_dataset(const SceneConfig& scene, const MotionSource& motion,
                                   const std::string& config_text,
                                   const std::string& out_dir,
                                   const DatasetExportOptions& options) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory: " + out_dir);
    }

    const auto frame_count = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(scene.frame_rate * scene.duration)));
    std::map<std::string, double> radii = default_capsule_radii();
    for (const auto& [category, radius] : scene.capsule_radii) {
        radii[category] = radius;
    }

    DatasetExportResult result;
    result.record_count = static_cast<int>(frame_count);

    if (options.full_depth) {
        fs::create_directories(fs::path(out_dir) / "depth", ec);
        if (ec) {
            throw IoError("cannot create depth directory under: " + out_dir);
        }
    }

    // Records are rendered in parallel but written in frame order by one
    // writer.
    std::vector<std::string> rendered(frame_count);
    std::vector<std::vector<std::string>> extra_files(frame_count);
    parallel_for(frame_count, options.threads, [&](std::size_t f) {
        const double t = static_cast<double>(f) / scene.frame_rate;
        const SkeletonPose truth = motion.pose_at(t);
        const std::vector<Capsule> capsules = build_capsules(truth, radii);

        json record;
        record["frame_id"] = f;
        record["t_s"] = t;
        json truth_arr = json::array();
        for (const Joint j : all_joints()) {
            const auto& e = truth[j];
            json entry{{"joint", joint_name(j)}, {"present", e.present}};
            if (e.present) {
                entry["x"] = e.position.x;
                entry["y"] = e.position.y;
                entry["z"] = e.position.z;
            }
            truth_arr.push_back(std::move(entry));
        }
        record["ground_truth"] = std::move(truth_arr);
        if (!scene.appearance.empty()) {
            record["appearance"] = scene.appearance;
        }

        json cams = json::array();
        for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
            const CameraModel& cam = scene.cameras[c];
            RngStream det_rng = derive_stream(scene.master_seed, "detect", f, c);
            const Detection2D det = simulate_detection(
                cam, truth, capsules, scene.detector.sigma_px, scene.detector.p_miss,
                det_rng);
            RngStream depth_rng = derive_stream(scene.master_seed, "depth-sample", f, c);

            json cam_json;
            cam_json["id"] = cam.id;
            cam_json["intrinsics"] = {{"fx", cam.intrinsics.fx},
                                      {"fy", cam.intrinsics.fy},
                                      {"cx", cam.intrinsics.cx},
                                      {"cy", cam.intrinsics.cy},
                                      {"width", cam.intrinsics.width},
                                      {"height", cam.intrinsics.height}};
            cam_json["world_from_camera"] = pose_to_json(cam.world_from_camera);
            json keypoints = json::array();
            json depth_samples = json::array();
            for (const Joint j : all_joints()) {
                const auto& kp = det.keypoints[static_cast<std::size_t>(j)];
                json entry{{"joint", joint_name(j)}, {"detected", kp.detected}};
                if (kp.detected) {
                    entry["u"] = kp.u;
                    entry["v"] = kp.v;
                    entry["confidence"] = kp.confidence;
                    if (in_image(cam.intrinsics, kp.u, kp.v)) {
                        const auto z =
                            depth_at_pixel(cam, kp.u, kp.v, capsules, depth_rng);
                        if (z) {
                            depth_samples.push_back(json{{"joint", joint_name(j)},
                                                         {"u", kp.u},
                                                         {"v", kp.v},
                                                         {"z", *z}});
                        }
                    }
                }
                keypoints.push_back(std::move(entry));
            }
            cam_json["keypoints"] = std::move(keypoints);
            cam_json["depth_samples"] = std::move(depth_samples);
            cams.push_back(std::move(cam_json));

            if (options.full_depth) {
                RngStream raster_rng =
                    derive_stream(scene.master_seed, "depth-raster", f, c);
                const std::string rel = "depth/" + cam.id + "_f" + std::to_string(f) +
                                        ".pgm";
                write_depth_pgm(cam, capsules, raster_rng,
                                (fs::path(out_dir) / rel).string());
                extra_files[f].push_back(rel);
            }
        }
        record["cameras"] = std::move(cams);
        rendered[f] = record.dump();
    });

    const std::string records_path = (fs::path(out_dir) / "dataset.jsonl").string();
    {
        auto out = open_out(records_path);
        for (const std::string& line : rendered) {
            out << line << "\n";
        }
        finish(out, records_path);
    }
    result.files.push_back("dataset.jsonl");

    const std::string snapshot_path = (fs::path(out_dir) / "scene_config.json").string();
    {
        auto out = open_out(snapshot_path);
        out << config_text;
        finish(out, snapshot_path);
    }
    result.files.push_back("scene_config.json");

    for (const auto& per_frame : extra_files) {
        for (const auto& rel : per_frame) {
            result.files.push_back(rel);
        }
    }
    return result;
}

} // namespace skelsim
