#pragma once

#include "skelsim/geometry.hpp"
#include "skelsim/rng.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace skelsim {

struct CameraIntrinsics {
    double fx = 0.0; // pixels
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    /// fx, fy > 0 and the principal point strictly inside the image.
    bool valid() const {
        return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx > 0.0 &&
               cx < width && cy > 0.0 && cy < height;
    }

    double horizontal_fov() const; // radians
    double vertical_fov() const;
};

/// sigma(z) = sigma0 + sigma1 * z^2, the usual quadratic growth of
/// stereo / structured-light depth error. Returns beyond max_range are
/// dropped entirely.
struct DepthNoiseModel {
    double sigma0 = 0.002;   // meters
    double sigma1 = 0.0005;  // meters per square meter
    double max_range = 8.0;  // meters

    double sigma_at(double z) const { return sigma0 + sigma1 * z * z; }
};

struct CameraModel {
    std::string id;
    CameraIntrinsics intrinsics;
    RigidTransform world_from_camera;
    DepthNoiseModel depth_noise;
    double pixel_noise_sigma = 0.0; // pixels, per axis
};

/// Pixel coordinates plus camera-frame depth of a projected point.
struct PixelDepth {
    double u = 0.0;
    double v = 0.0;
    double z = 0.0; // meters, camera-frame z
};

/// Pinhole projection. Returns nullopt for points at or behind the camera
/// plane (z <= 0); no clipping to the image bounds (use in_image).
std::optional<PixelDepth> project(const CameraModel& cam, const Vec3& p_world);

/// Inverse of project on the z > 0 half space. Throws std::invalid_argument
/// for z <= 0.
Vec3 back_project(const CameraModel& cam, double u, double v, double z);

/// Half-open bounds: 0 <= u < width, 0 <= v < height.
bool in_image(const CameraIntrinsics& intr, double u, double v);

/// Gaussian depth perturbation, dropout beyond max_range, clamped positive.
/// Throws std::invalid_argument for z <= 0.
std::optional<double> apply_depth_noise(const DepthNoiseModel& model, double z,
                                        RngStream& rng);

enum class CameraPreset {
    KinectV2,
    RealsenseD435,
    Zed2,
};

std::string_view camera_preset_name(CameraPreset preset);
std::optional<CameraPreset> camera_preset_from_name(std::string_view name);

/// Nominal depth-stream model for the named device (see
/// docs/camera_presets.md), identity pose, default noise. These are
/// vendor-nominal defaults, not calibrated ground truth.
CameraModel preset(CameraPreset p);

} // namespace skelsim
