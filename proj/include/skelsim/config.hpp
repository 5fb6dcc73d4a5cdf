#pragma once

#include "skelsim/calibration.hpp"
#include "skelsim/motion.hpp"
#include "skelsim/scene.hpp"
#include "skelsim/teleop.hpp"

#include <optional>
#include <string>

namespace skelsim {

/// Subcommand-specific sections that ride along in the same document.
struct ExperimentConfig {
    SceneConfig scene;
    CalibrationExperimentParams calibration;
    TeleopParams teleop;
};

/// Parses and validates the JSON scene document (see docs/scene_config.md).
/// Validation is strict: unknown keys are rejected with path-qualified
/// messages, camera ids must be unique, rates and durations positive, and a
/// declared BVH file must be readable. Defaults are filled for everything
/// optional.
SceneConfig parse_scene_config(const std::string& document);

/// Same parse, also extracting the optional "calibration" and "teleop"
/// sections (defaults when absent). The calibration section inherits the
/// scene's master seed.
ExperimentConfig parse_experiment_config(const std::string& document);

/// Builds the actor motion source a config declares, loading and parsing
/// the BVH clip when one is named. Throws IoError / ParseError on
/// unreadable or malformed clips.
MotionSource make_motion_source(const SceneConfig& scene);

} // namespace skelsim
