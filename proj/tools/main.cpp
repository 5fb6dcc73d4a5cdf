#include "skelsim/config.hpp"
#include "skelsim/errors.hpp"
#include "skelsim/export.hpp"
#include "skelsim/numfmt.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using namespace skelsim;

#ifndef SKELSIM_VERSION
#define SKELSIM_VERSION "0.0.0"
#endif

struct GlobalOptions {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool has_seed_override = false;
    int threads = 0;
    bool full_depth = false;
    bool dump_observations = false;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config file: " + path);
    }
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory: " + dir);
    }
}

RunManifest start_manifest(const GlobalOptions& opts, const std::string& subcommand,
                           const std::string& config_text, std::uint64_t seed) {
    RunManifest m;
    m.tool_version = SKELSIM_VERSION;
    m.config_digest = config_digest_hex(config_text);
    m.master_seed = seed;
    m.subcommand = subcommand;
    m.started_at = iso8601_utc_now();
    return m;
}

void finish_manifest(RunManifest& manifest, const GlobalOptions& opts) {
    manifest.finished_at = iso8601_utc_now();
    write_manifest(manifest, (fs::path(opts.out_dir) / "manifest.json").string());
}

ExperimentConfig load_config(const GlobalOptions& opts, std::string& config_text) {
    if (opts.config_path.empty()) {
        throw std::invalid_argument("--config is required for this subcommand");
    }
    config_text = read_file(opts.config_path);
    ExperimentConfig config = parse_experiment_config(config_text);
    if (opts.has_seed_override) {
        config.scene.master_seed = opts.seed_override;
        config.calibration.master_seed = opts.seed_override;
    }
    return config;
}

int run_calibrate(const GlobalOptions& opts) {
    std::string config_text;
    ExperimentConfig config = load_config(opts, config_text);
    config.calibration.threads = opts.threads;
    ensure_out_dir(opts.out_dir);
    if (opts.dump_observations) {
        config.calibration.observation_dump_dir = opts.out_dir;
    }
    RunManifest manifest =
        start_manifest(opts, "calibrate", config_text, config.scene.master_seed);

    const ExperimentReport report = run_calibration_experiment(config.calibration);
    const std::string csv = (fs::path(opts.out_dir) / "calibration.csv").string();
    write_metrics_csv(report, csv);
    manifest.outputs.push_back("calibration.csv");
    if (opts.dump_observations) {
        const std::size_t prop_count =
            config.calibration.props.empty() ? 2 : config.calibration.props.size();
        for (std::size_t r = 0; r < config.calibration.radii.size(); ++r) {
            for (std::size_t p = 0; p < prop_count; ++p) {
                for (int t = 0; t < config.calibration.trials; ++t) {
                    manifest.outputs.push_back("observations_r" + std::to_string(r) +
                                               "_p" + std::to_string(p) + "_t" +
                                               std::to_string(t) + ".jsonl");
                }
            }
        }
    }
    finish_manifest(manifest, opts);
    std::cout << "calibrate: " << report.size() << " rows -> " << csv << "\n";
    return 0;
}

int run_track(const GlobalOptions& opts) {
    std::string config_text;
    ExperimentConfig config = load_config(opts, config_text);
    ensure_out_dir(opts.out_dir);
    RunManifest manifest =
        start_manifest(opts, "track", config_text, config.scene.master_seed);

    const MotionSource motion = make_motion_source(config.scene);
    const TrackingRunResult run =
        run_tracking_experiment(config.scene, motion, opts.threads);
    const std::string metrics_csv =
        (fs::path(opts.out_dir) / "tracking_metrics.csv").string();
    const std::string frames_csv =
        (fs::path(opts.out_dir) / "tracking_frames.csv").string();
    write_metrics_csv(run.metrics, metrics_csv);
    write_tracking_frames_csv(run.frames, frames_csv);
    manifest.outputs.push_back("tracking_metrics.csv");
    manifest.outputs.push_back("tracking_frames.csv");
    finish_manifest(manifest, opts);
    std::cout << "track: " << run.frames.size() << " frames -> " << metrics_csv << "\n";
    return 0;
}

int run_teleop(const GlobalOptions& opts) {
    std::string config_text;
    ExperimentConfig config = load_config(opts, config_text);
    ensure_out_dir(opts.out_dir);
    RunManifest manifest =
        start_manifest(opts, "teleop", config_text, config.scene.master_seed);

    const MotionSource motion = make_motion_source(config.scene);
    const TeleopResult result =
        run_teleop_experiment(config.scene, motion, config.teleop);
    const std::string trace_csv = (fs::path(opts.out_dir) / "teleop_trace.csv").string();
    const std::string ref_csv =
        (fs::path(opts.out_dir) / "teleop_reference.csv").string();
    const std::string summary_csv =
        (fs::path(opts.out_dir) / "teleop_summary.csv").string();
    write_teleop_trace_csv(result.trace, trace_csv);
    write_reference_path_csv(result.trace.reference_path, ref_csv);
    {
        std::ofstream out(summary_csv);
        if (!out) {
            throw IoError("cannot open for writing: " + summary_csv);
        }
        out << "path_rmse_m,frames,dropout_frames\n";
        out << format_double(result.path_rmse, 9) << ',' << result.frames << ','
            << result.dropout_frames << "\n";
    }
    manifest.outputs.push_back("teleop_trace.csv");
    manifest.outputs.push_back("teleop_reference.csv");
    manifest.outputs.push_back("teleop_summary.csv");
    finish_manifest(manifest, opts);
    std::cout << "teleop: path RMSE " << format_double(result.path_rmse, 6) << " m over "
              << result.frames << " frames\n";
    return 0;
}

int run_dataset(const GlobalOptions& opts) {
    std::string config_text;
    ExperimentConfig config = load_config(opts, config_text);
    ensure_out_dir(opts.out_dir);
    RunManifest manifest =
        start_manifest(opts, "dataset", config_text, config.scene.master_seed);

    const MotionSource motion = make_motion_source(config.scene);
    DatasetExportOptions options;
    options.full_depth = opts.full_depth;
    options.threads = opts.threads;
    const DatasetExportResult result =
        export_dataset(config.scene, motion, config_text, opts.out_dir, options);
    manifest.outputs = result.files;
    finish_manifest(manifest, opts);
    std::cout << "dataset: " << result.record_count << " records -> " << opts.out_dir
              << "/dataset.jsonl\n";
    return 0;
}

void print_preset_table() {
    std::cout << "preset          width height fx        fy        cx     cy     "
                 "sigma0_m sigma1_m_per_m2 max_range_m\n";
    for (const CameraPreset p :
         {CameraPreset::KinectV2, CameraPreset::RealsenseD435, CameraPreset::Zed2}) {
        const CameraModel cam = preset(p);
        std::cout << camera_preset_name(p) << std::string(16 - camera_preset_name(p).size(), ' ')
                  << cam.intrinsics.width << "   " << cam.intrinsics.height << "    "
                  << format_double(cam.intrinsics.fx, 7) << "  "
                  << format_double(cam.intrinsics.fy, 7) << "  " << cam.intrinsics.cx
                  << "  " << cam.intrinsics.cy << "  " << cam.depth_noise.sigma0 << "    "
                  << cam.depth_noise.sigma1 << "          " << cam.depth_noise.max_range
                  << "\n";
    }
}

int run_info(const GlobalOptions& opts) {
    print_preset_table();
    std::string config_text;
    std::uint64_t seed = opts.has_seed_override ? opts.seed_override : 0;
    if (!opts.config_path.empty()) {
        config_text = read_file(opts.config_path);
        ExperimentConfig config = parse_experiment_config(config_text);
        if (opts.has_seed_override) {
            config.scene.master_seed = opts.seed_override;
        }
        const SceneConfig& scene = config.scene;
        seed = scene.master_seed;
        std::cout << "\nscene: " << scene.cameras.size() << " cameras, "
                  << format_double(scene.duration, 6) << " s at "
                  << format_double(scene.frame_rate, 6) << " Hz, seed "
                  << scene.master_seed << "\n";
        for (const CameraModel& cam : scene.cameras) {
            const Vec3& p = cam.world_from_camera.translation;
            std::cout << "  camera " << cam.id << " at (" << format_double(p.x, 4) << ", "
                      << format_double(p.y, 4) << ", " << format_double(p.z, 4)
                      << "), pixel noise " << cam.pixel_noise_sigma << " px\n";
        }
        std::cout << "  actor: "
                  << (scene.bvh_path ? "bvh " + *scene.bvh_path
                                     : std::string(motion_kind_name(
                                           scene.synth_kind.value_or(MotionKind::Stand))))
                  << "\n  prop: " << scene.prop.name << " ("
                  << scene.prop.fiducial_points.size() << " fiducials"
                  << (scene.prop.planar ? ", planar" : "") << ")\n";
    }
    ensure_out_dir(opts.out_dir);
    RunManifest manifest = start_manifest(opts, "info", config_text, seed);
    finish_manifest(manifest, opts);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic multi-camera human tracking simulator"};
    app.set_version_flag("--version", SKELSIM_VERSION);
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "Scene configuration file (JSON)");
    app.add_option("--out", opts.out_dir, "Output directory (default: out)");
    auto* seed_opt =
        app.add_option("--seed", opts.seed_override, "Override the config master seed");
    app.add_option("--threads", opts.threads,
                   "Worker threads for trials/frames (0 = hardware)");

    auto* calibrate = app.add_subcommand("calibrate", "Run the calibration experiment");
    calibrate->add_flag("--dump-observations", opts.dump_observations,
                        "Also write raw fiducial observations (JSONL per run)");
    auto* track = app.add_subcommand("track", "Run the multi-camera tracking experiment");
    auto* teleop = app.add_subcommand("teleop", "Run the writing teleoperation experiment");
    auto* dataset = app.add_subcommand("dataset", "Export an annotated synthetic dataset");
    dataset->add_flag("--full-depth", opts.full_depth,
                      "Also write per-camera depth rasters (PGM)");
    auto* info = app.add_subcommand("info", "Print presets and the scene summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints usage to stderr
        return 1;
    }
    opts.has_seed_override = seed_opt->count() > 0;

    try {
        if (calibrate->parsed()) {
            return run_calibrate(opts);
        }
        if (track->parsed()) {
            return run_track(opts);
        }
        if (teleop->parsed()) {
            return run_teleop(opts);
        }
        if (dataset->parsed()) {
            return run_dataset(opts);
        }
        if (info->parsed()) {
            return run_info(opts);
        }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
