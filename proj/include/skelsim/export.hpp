#pragma once

#include "skelsim/calibration.hpp"
#include "skelsim/motion.hpp"
#include "skelsim/scene.hpp"
#include "skelsim/teleop.hpp"
#include "skelsim/tracking.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace skelsim {

/// Reproducibility record every subcommand leaves next to its outputs.
struct RunManifest {
    std::string tool_version;
    std::string config_digest; // stable hex digest of the config text
    std::uint64_t master_seed = 0;
    std::string subcommand;
    std::string started_at;  // ISO-8601 UTC
    std::string finished_at;
    std::vector<std::string> outputs;
};

/// FNV-1a (64-bit) of the raw config text, as 16 hex digits. Stable across
/// reruns of the same bytes.
std::string config_digest_hex(const std::string& config_text);

std::string iso8601_utc_now();

void write_manifest(const RunManifest& manifest, const std::string& path);

/// CSV writers (9 significant digits, '.' decimal point regardless of
/// locale). All throw std::invalid_argument on an empty report before
/// creating any file, and IoError with path context on write failures.
void write_metrics_csv(const ExperimentReport& report, const std::string& path);
void write_metrics_csv(const TrackingMetrics& metrics, const std::string& path);

/// Per-frame tracking log: frame,t_s,source,joint,present,x,y,z,
/// gt_x,gt_y,gt_z,conf — one row per (frame, source, joint).
void write_tracking_frames_csv(std::span<const TrackedFrame> frames,
                               const std::string& path);

/// Teleop trace: t_s,des_x,des_y,des_z,act_x,act_y,act_z.
void write_teleop_trace_csv(const TeleopTrace& trace, const std::string& path);

/// Reference polyline: seg,x,y,z.
void write_reference_path_csv(const std::vector<Vec3>& path, const std::string& file);

/// Optional line-delimited observation dump for external calibration tools:
/// one JSON object per line with frame_id, camera_id, point_id, u, v.
void write_observation_dump(std::span<const FiducialObservation> observations,
                            const std::string& path);

struct DatasetExportOptions {
    bool full_depth = false; // also write one depth raster per camera/frame
    int threads = 1;
};

struct DatasetExportResult {
    std::vector<std::string> files; // relative to out_dir
    int record_count = 0;
};

/// Writes one JSON record per frame (camera annotations + 3D ground truth +
/// sparse depth samples at the detected keypoints) as dataset.jsonl, plus a
/// verbatim copy of the config text as scene_config.json. Identical
/// (config, seed) pairs produce byte-identical files. With full_depth, one
/// 16-bit PGM depth raster (millimeters, 0 = no return) is written per
/// camera per frame under depth/.
DatasetExportResult export_dataset(const SceneConfig& scene, const MotionSource& motion,
                                   const std::string& config_text,
                                   const std::string& out_dir,
                                   const DatasetExportOptions& options = {});

} // namespace skelsim
