#include "skelsim/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace skelsim {

double CameraIntrinsics::horizontal_fov() const {
    return 2.0 * std::atan2(static_cast<double>(width), 2.0 * fx);
}

double CameraIntrinsics::vertical_fov() const {
    return 2.0 * std::atan2(static_cast<double>(height), 2.0 * fy);
}

std::optional<PixelDepth> project(const CameraModel& cam, const Vec3& p_world) {
    const Vec3 p_cam = transform_point(invert(cam.world_from_camera), p_world);
    if (p_cam.z <= 0.0) {
        return std::nullopt;
    }
    PixelDepth out;
    out.u = cam.intrinsics.fx * p_cam.x / p_cam.z + cam.intrinsics.cx;
    out.v = cam.intrinsics.fy * p_cam.y / p_cam.z + cam.intrinsics.cy;
    out.z = p_cam.z;
    return out;
}

Vec3 back_project(const CameraModel& cam, double u, double v, double z) {
    if (!(z > 0.0)) {
        throw std::invalid_argument("back_project: depth must be positive");
    }
    const Vec3 p_cam{(u - cam.intrinsics.cx) * z / cam.intrinsics.fx,
                     (v - cam.intrinsics.cy) * z / cam.intrinsics.fy, z};
    return transform_point(cam.world_from_camera, p_cam);
}

bool in_image(const CameraIntrinsics& intr, double u, double v) {
    return u >= 0.0 && u < intr.width && v >= 0.0 && v < intr.height;
}

std::optional<double> apply_depth_noise(const DepthNoiseModel& model, double z,
                                        RngStream& rng) {
    if (!(z > 0.0)) {
        throw std::invalid_argument("apply_depth_noise: depth must be positive");
    }
    if (z > model.max_range) {
        return std::nullopt;
    }
    const double noisy = z + rng.normal(0.0, model.sigma_at(z));
    return std::max(noisy, 1e-9);
}

std::string_view camera_preset_name(CameraPreset p) {
    switch (p) {
    case CameraPreset::KinectV2:
        return "kinect_v2";
    case CameraPreset::RealsenseD435:
        return "realsense_d435";
    case CameraPreset::Zed2:
        return "zed2";
    }
    return "?";
}

std::optional<CameraPreset> camera_preset_from_name(std::string_view name) {
    if (name == "kinect_v2") {
        return CameraPreset::KinectV2;
    }
    if (name == "realsense_d435") {
        return CameraPreset::RealsenseD435;
    }
    if (name == "zed2") {
        return CameraPreset::Zed2;
    }
    return std::nullopt;
}

namespace {

CameraIntrinsics intrinsics_from_fov(int width, int height, double hfov_deg,
                                     double vfov_deg) {
    const double deg = std::atan(1.0) / 45.0; // pi / 180
    CameraIntrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = width / (2.0 * std::tan(hfov_deg * deg / 2.0));
    intr.fy = height / (2.0 * std::tan(vfov_deg * deg / 2.0));
    intr.cx = width / 2.0;
    intr.cy = height / 2.0;
    return intr;
}

} // namespace

CameraModel preset(CameraPreset p) {
    // Depth-stream geometry from the vendor nominal resolution and FoV;
    // the full table including FoV sources is docs/camera_presets.md.
    CameraModel cam;
    cam.id = std::string(camera_preset_name(p));
    switch (p) {
    case CameraPreset::KinectV2:
        cam.intrinsics = intrinsics_from_fov(512, 424, 70.6, 60.0);
        cam.depth_noise.max_range = 4.5;
        break;
    case CameraPreset::RealsenseD435:
        cam.intrinsics = intrinsics_from_fov(848, 480, 87.0, 58.0);
        cam.depth_noise.max_range = 10.0;
        break;
    case CameraPreset::Zed2:
        cam.intrinsics = intrinsics_from_fov(1280, 720, 110.0, 70.0);
        cam.depth_noise.max_range = 20.0;
        break;
    }
    return cam;
}

} // namespace skelsim
