#include "skelsim/calibration.hpp"

#include "skelsim/errors.hpp"
#include "skelsim/export.hpp"
#include "skelsim/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

namespace skelsim {

namespace {

constexpr double kMaxIncidenceDeg = 75.0;

Eigen::Vector3d to_eigen(const Vec3& v) { return {v.x, v.y, v.z}; }

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

RigidTransform from_eigen(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
    const std::array<double, 9> m{r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1),
                                  r(1, 2), r(2, 0), r(2, 1), r(2, 2)};
    return {Rotation::from_matrix(m), Vec3{t.x(), t.y(), t.z()}};
}

/// Left-multiplicative SE(3) update: T <- (exp(theta), dt) o T. The
/// quaternion is built with the small-angle series so arbitrarily tiny
/// solver steps stay exact.
RigidTransform apply_delta(const RigidTransform& pose, const Eigen::Vector3d& theta,
                           const Eigen::Vector3d& dt) {
    const double angle = theta.norm();
    const double half = 0.5 * angle;
    const double factor =
        angle < 1e-8 ? 0.5 - angle * angle / 48.0 : std::sin(half) / angle;
    const Rotation rot = Rotation::from_quaternion(
        std::cos(half), factor * theta.x(), factor * theta.y(), factor * theta.z());
    return compose(RigidTransform{rot, Vec3{dt.x(), dt.y(), dt.z()}}, pose);
}

struct Correspondence {
    Vec3 point; // prop-local
    double u = 0.0;
    double v = 0.0;
};

/// Sum of squared pixel residuals, +inf when some point lands at or behind
/// the camera plane (makes such candidates lose every comparison).
double reprojection_cost(const RigidTransform& camera_from_prop,
                         std::span<const Correspondence> corr,
                         const CameraIntrinsics& intr) {
    double cost = 0.0;
    for (const auto& c : corr) {
        const Vec3 p = transform_point(camera_from_prop, c.point);
        if (p.z <= 1e-9) {
            return std::numeric_limits<double>::infinity();
        }
        const double du = intr.fx * p.x / p.z + intr.cx - c.u;
        const double dv = intr.fy * p.y / p.z + intr.cy - c.v;
        cost += du * du + dv * dv;
    }
    return cost;
}

/// Gauss-Newton polish of a pose initialization; the cost never increases
/// across accepted iterations (backtracking on the step).
RigidTransform refine_pnp(RigidTransform pose, std::span<const Correspondence> corr,
                          const CameraIntrinsics& intr) {
    double cost = reprojection_cost(pose, corr, intr);
    if (std::isinf(cost)) {
        throw DegenerateGeometryError("pnp: initialization places points behind the camera");
    }
    for (int iter = 0; iter < 50; ++iter) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& c : corr) {
            const Vec3 pc = transform_point(pose, c.point);
            const Eigen::Vector3d p = to_eigen(pc);
            Eigen::Matrix<double, 2, 3> jproj;
            jproj << intr.fx / p.z(), 0, -intr.fx * p.x() / (p.z() * p.z()), 0,
                intr.fy / p.z(), -intr.fy * p.y() / (p.z() * p.z());
            Eigen::Matrix<double, 2, 6> j;
            j.block<2, 3>(0, 0) = -jproj * skew(p);
            j.block<2, 3>(0, 3) = jproj;
            const Eigen::Vector2d r(intr.fx * p.x() / p.z() + intr.cx - c.u,
                                    intr.fy * p.y() / p.z() + intr.cy - c.v);
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        const Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(h);
        if (ldlt.info() != Eigen::Success) {
            throw DegenerateGeometryError("pnp: rank-deficient normal system");
        }
        Eigen::Matrix<double, 6, 1> delta = ldlt.solve(-g);
        if (!delta.allFinite()) {
            throw DegenerateGeometryError("pnp: rank-deficient normal system");
        }
        if (delta.norm() < 1e-10) {
            break;
        }
        bool accepted = false;
        double alpha = 1.0;
        for (int halving = 0; halving < 12; ++halving) {
            const RigidTransform candidate =
                apply_delta(pose, alpha * delta.head<3>(), alpha * delta.tail<3>());
            const double candidate_cost = reprojection_cost(candidate, corr, intr);
            if (candidate_cost <= cost) {
                pose = candidate;
                cost = candidate_cost;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            break;
        }
    }
    return pose;
}

/// Homography-based initialization for coplanar point sets. The plane basis
/// comes from PCA, so any coplanar cloud works, not only z = 0 patterns.
RigidTransform init_planar(std::span<const Correspondence> corr,
                           const CameraIntrinsics& intr, const Eigen::Vector3d& centroid,
                           const Eigen::Matrix3d& plane_axes) {
    // plane_axes columns: e1, e2 in-plane, e3 normal.
    const std::size_t n = corr.size();
    Eigen::MatrixXd src(n, 2);
    Eigen::MatrixXd img(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d d = to_eigen(corr[i].point) - centroid;
        src(static_cast<Eigen::Index>(i), 0) = plane_axes.col(0).dot(d);
        src(static_cast<Eigen::Index>(i), 1) = plane_axes.col(1).dot(d);
        img(static_cast<Eigen::Index>(i), 0) = (corr[i].u - intr.cx) / intr.fx;
        img(static_cast<Eigen::Index>(i), 1) = (corr[i].v - intr.cy) / intr.fy;
    }
    // Hartley normalization on both sides.
    auto normalizer = [](const Eigen::MatrixXd& pts) {
        const Eigen::RowVector2d mean = pts.colwise().mean();
        const double scale =
            std::sqrt(2.0) /
            std::max(1e-12, (pts.rowwise() - mean).rowwise().norm().mean());
        Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
        t(0, 0) = t(1, 1) = scale;
        t(0, 2) = -scale * mean(0);
        t(1, 2) = -scale * mean(1);
        return t;
    };
    const Eigen::Matrix3d t_src = normalizer(src);
    const Eigen::Matrix3d t_img = normalizer(img);

    Eigen::MatrixXd a(2 * n, 9);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d s = t_src * Eigen::Vector3d(src(i, 0), src(i, 1), 1.0);
        const Eigen::Vector3d m = t_img * Eigen::Vector3d(img(i, 0), img(i, 1), 1.0);
        const auto r0 = static_cast<Eigen::Index>(2 * i);
        a.row(r0) << -s.x(), -s.y(), -1, 0, 0, 0, m.x() * s.x(), m.x() * s.y(), m.x();
        a.row(r0 + 1) << 0, 0, 0, -s.x(), -s.y(), -1, m.y() * s.x(), m.y() * s.y(), m.y();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sing = svd.singularValues();
    if (sing(7) < 1e-12 * sing(0)) {
        throw DegenerateGeometryError("pnp: degenerate planar configuration");
    }
    Eigen::Matrix3d h_norm;
    const Eigen::VectorXd hv = svd.matrixV().col(8);
    h_norm << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
    const Eigen::Matrix3d h = t_img.inverse() * h_norm * t_src;

    // Plane-local frame: q = A^T (p - centroid) maps prop-local to plane
    // coordinates; the homography pose maps plane coordinates to camera.
    const Eigen::Matrix3d a_t = plane_axes.transpose();
    const RigidTransform plane_from_prop =
        from_eigen(a_t, -(a_t * centroid));

    RigidTransform best_pose;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const double sign : {1.0, -1.0}) {
        const Eigen::Matrix3d hs = sign * h;
        const double lambda = 2.0 / (hs.col(0).norm() + hs.col(1).norm());
        Eigen::Matrix3d r;
        r.col(0) = lambda * hs.col(0);
        r.col(1) = lambda * hs.col(1);
        r.col(2) = r.col(0).cross(r.col(1));
        const Eigen::Vector3d t = lambda * hs.col(2);
        const RigidTransform camera_from_plane = from_eigen(r, t);
        const RigidTransform pose = compose(camera_from_plane, plane_from_prop);
        const double cost = reprojection_cost(pose, corr, intr);
        if (cost < best_cost) {
            best_cost = cost;
            best_pose = pose;
        }
    }
    if (std::isinf(best_cost)) {
        throw DegenerateGeometryError("pnp: homography decomposition behind camera");
    }
    return best_pose;
}

/// 6-point DLT initialization for non-coplanar point sets.
RigidTransform init_dlt(std::span<const Correspondence> corr,
                        const CameraIntrinsics& intr) {
    const std::size_t n = corr.size();
    // Hartley normalization: 3D to zero centroid / mean norm sqrt(3), 2D
    // (normalized image coords) to zero centroid / mean norm sqrt(2).
    Eigen::Vector3d c3 = Eigen::Vector3d::Zero();
    Eigen::Vector2d c2 = Eigen::Vector2d::Zero();
    for (const auto& c : corr) {
        c3 += to_eigen(c.point);
        c2 += Eigen::Vector2d((c.u - intr.cx) / intr.fx, (c.v - intr.cy) / intr.fy);
    }
    c3 /= static_cast<double>(n);
    c2 /= static_cast<double>(n);
    double s3 = 0.0, s2 = 0.0;
    for (const auto& c : corr) {
        s3 += (to_eigen(c.point) - c3).norm();
        s2 += (Eigen::Vector2d((c.u - intr.cx) / intr.fx, (c.v - intr.cy) / intr.fy) - c2)
                  .norm();
    }
    s3 = std::sqrt(3.0) / std::max(1e-12, s3 / static_cast<double>(n));
    s2 = std::sqrt(2.0) / std::max(1e-12, s2 / static_cast<double>(n));

    Eigen::MatrixXd a(2 * n, 12);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d x = s3 * (to_eigen(corr[i].point) - c3);
        const Eigen::Vector2d m =
            s2 * (Eigen::Vector2d((corr[i].u - intr.cx) / intr.fx,
                                  (corr[i].v - intr.cy) / intr.fy) -
                  c2);
        const auto r0 = static_cast<Eigen::Index>(2 * i);
        a.row(r0) << x.x(), x.y(), x.z(), 1, 0, 0, 0, 0, -m.x() * x.x(), -m.x() * x.y(),
            -m.x() * x.z(), -m.x();
        a.row(r0 + 1) << 0, 0, 0, 0, x.x(), x.y(), x.z(), 1, -m.y() * x.x(),
            -m.y() * x.y(), -m.y() * x.z(), -m.y();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sing = svd.singularValues();
    if (sing(10) < 1e-12 * sing(0)) {
        throw DegenerateGeometryError("pnp: degenerate spatial configuration");
    }
    const Eigen::VectorXd pv = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> p_norm;
    p_norm << pv(0), pv(1), pv(2), pv(3), pv(4), pv(5), pv(6), pv(7), pv(8), pv(9),
        pv(10), pv(11);

    // Undo the normalizations: m_orig = T2^-1 m_norm, x_norm = T3 x_orig.
    Eigen::Matrix3d t2inv = Eigen::Matrix3d::Identity();
    t2inv(0, 0) = t2inv(1, 1) = 1.0 / s2;
    t2inv(0, 2) = c2.x();
    t2inv(1, 2) = c2.y();
    Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
    t3.block<3, 3>(0, 0) *= s3;
    t3.block<3, 1>(0, 3) = -s3 * c3;
    Eigen::Matrix<double, 3, 4> p = t2inv * p_norm * t3;

    const double row_scale = p.block<1, 3>(2, 0).norm();
    if (row_scale < 1e-15) {
        throw DegenerateGeometryError("pnp: degenerate projection matrix");
    }
    p /= row_scale;
    // Positive depth for the centroid selects the physical sign.
    const Eigen::Vector4d ch(c3.x(), c3.y(), c3.z(), 1.0);
    if ((p * ch)(2) < 0.0) {
        p = -p;
    }
    const Eigen::Matrix3d m = p.block<3, 3>(0, 0);
    if (m.determinant() <= 0.0) {
        // Heavy noise on a small image footprint can push the linear
        // estimate across the reflection boundary; the caller falls back to
        // the plane-approximation initializer.
        throw DegenerateGeometryError("pnp: reflected projection matrix");
    }
    return from_eigen(m, p.col(3));
}

struct GroupedObservations {
    // (frame, camera) -> pixel observations; std::map fixes the iteration
    // order so results do not depend on input ordering.
    std::map<std::pair<int, std::string>, std::vector<PixelObservation>> groups;
};

GroupedObservations group_by_frame_camera(std::span<const FiducialObservation> obs,
                                          std::size_t point_count) {
    GroupedObservations out;
    for (const auto& o : obs) {
        if (o.point_id < 0 || static_cast<std::size_t>(o.point_id) >= point_count) {
            throw std::invalid_argument("observation references fiducial " +
                                        std::to_string(o.point_id) +
                                        " outside the pattern");
        }
        out.groups[{o.frame_id, o.camera_id}].push_back({o.point_id, o.u, o.v});
    }
    // Sorting makes every downstream accumulation independent of the input
    // observation order.
    for (auto& [key, pixels] : out.groups) {
        std::sort(pixels.begin(), pixels.end(), [](const auto& a, const auto& b) {
            return std::tie(a.point_id, a.u, a.v) < std::tie(b.point_id, b.u, b.v);
        });
    }
    return out;
}

struct AverageAccumulator {
    std::vector<RigidTransform> samples;

    void add(const RigidTransform& t) { samples.push_back(t); }

    int count() const { return static_cast<int>(samples.size()); }

    /// Chordal-mean rotation and arithmetic-mean translation, with one
    /// reject-and-redo pass: planar PnP occasionally lands on the mirrored
    /// pose, and a single flipped sample would poison a plain mean.
    RigidTransform mean() const {
        const RigidTransform first = plain_mean(samples);
        if (samples.size() < 3) {
            return first;
        }
        std::vector<double> rot_dev;
        std::vector<double> trans_dev;
        rot_dev.reserve(samples.size());
        trans_dev.reserve(samples.size());
        for (const RigidTransform& s : samples) {
            rot_dev.push_back(geodesic_angle(s.rotation, first.rotation));
            trans_dev.push_back((s.translation - first.translation).norm());
        }
        const double rot_limit = std::max(3.0 * median(rot_dev), 0.05);
        const double trans_limit = std::max(3.0 * median(trans_dev), 0.05);
        std::vector<RigidTransform> inliers;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (rot_dev[i] <= rot_limit && trans_dev[i] <= trans_limit) {
                inliers.push_back(samples[i]);
            }
        }
        if (inliers.empty() || inliers.size() == samples.size()) {
            return first;
        }
        return plain_mean(inliers);
    }

private:
    static RigidTransform plain_mean(const std::vector<RigidTransform>& list) {
        std::vector<Rotation> rotations;
        rotations.reserve(list.size());
        Vec3 translation_sum;
        for (const RigidTransform& t : list) {
            rotations.push_back(t.rotation);
            translation_sum += t.translation;
        }
        return {chordal_mean_rotation(rotations),
                translation_sum / static_cast<double>(list.size())};
    }

    static double median(std::vector<double> values) {
        std::sort(values.begin(), values.end());
        return values[values.size() / 2];
    }
};

} // namespace

std::vector<RigidTransform> sample_prop_poses(const PropWorkspace& workspace, int n,
                                              RngStream& rng) {
    if (n < 1) {
        throw std::invalid_argument("sample_prop_poses: n must be at least 1");
    }
    if (workspace.box_min.x > workspace.box_max.x ||
        workspace.box_min.y > workspace.box_max.y ||
        workspace.box_min.z > workspace.box_max.z) {
        throw std::invalid_argument("sample_prop_poses: inverted workspace box");
    }
    std::vector<RigidTransform> poses;
    poses.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        RigidTransform pose;
        pose.translation = {rng.uniform(workspace.box_min.x, workspace.box_max.x),
                            rng.uniform(workspace.box_min.y, workspace.box_max.y),
                            rng.uniform(workspace.box_min.z, workspace.box_max.z)};
        Rotation perturb = Rotation::identity();
        if (workspace.cone_half_angle > 0.0) {
            const double zc = rng.uniform(-1.0, 1.0);
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double s = std::sqrt(std::max(0.0, 1.0 - zc * zc));
            const Vec3 axis{s * std::cos(phi), s * std::sin(phi), zc};
            const double angle = rng.uniform(0.0, workspace.cone_half_angle);
            if (angle > 0.0) {
                perturb = Rotation::from_axis_angle(axis, angle);
            }
        }
        pose.rotation = workspace.nominal_rotation * perturb;
        poses.push_back(pose);
    }
    return poses;
}

std::vector<PixelObservation> observe_fiducials(const CameraModel& cam,
                                                const CalibrationProp& prop,
                                                const RigidTransform& world_from_prop,
                                                RngStream& rng) {
    std::vector<PixelObservation> out;
    const Vec3 cam_center = cam.world_from_camera.translation;
    const Vec3 normal_world = world_from_prop.rotation.rotate({0.0, 0.0, 1.0});
    const double cos_limit = std::cos(kMaxIncidenceDeg * std::numbers::pi / 180.0);
    for (std::size_t i = 0; i < prop.fiducial_points.size(); ++i) {
        const Vec3 p_world = transform_point(world_from_prop, prop.fiducial_points[i]);
        const auto pix = project(cam, p_world);
        if (!pix || !in_image(cam.intrinsics, pix->u, pix->v)) {
            continue;
        }
        if (prop.planar) {
            const Vec3 to_cam = cam_center - p_world;
            const double d = to_cam.norm();
            if (d < 1e-12 || normal_world.dot(to_cam) / d <= cos_limit) {
                continue; // grazing or back-facing pattern
            }
        }
        PixelObservation o;
        o.point_id = static_cast<int>(i);
        o.u = pix->u + rng.normal(0.0, cam.pixel_noise_sigma);
        o.v = pix->v + rng.normal(0.0, cam.pixel_noise_sigma);
        out.push_back(o);
    }
    return out;
}

PnpSolution solve_pnp(std::span<const Vec3> points_local,
                      std::span<const PixelObservation> pixels,
                      const CameraIntrinsics& intr) {
    if (pixels.size() < 4) {
        throw std::invalid_argument("solve_pnp: needs at least 4 correspondences, got " +
                                    std::to_string(pixels.size()));
    }
    std::vector<Correspondence> corr;
    corr.reserve(pixels.size());
    for (const auto& px : pixels) {
        if (px.point_id < 0 || static_cast<std::size_t>(px.point_id) >= points_local.size()) {
            throw std::invalid_argument("solve_pnp: pixel references fiducial " +
                                        std::to_string(px.point_id) +
                                        " outside the pattern");
        }
        corr.push_back({points_local[static_cast<std::size_t>(px.point_id)], px.u, px.v});
    }

    // Shape analysis of the referenced points: collinear sets are hopeless,
    // coplanar sets go down the homography path.
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& c : corr) {
        centroid += to_eigen(c.point);
    }
    centroid /= static_cast<double>(corr.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& c : corr) {
        const Eigen::Vector3d d = to_eigen(c.point) - centroid;
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d evals = eig.eigenvalues(); // ascending
    if (evals(1) < 1e-9 * std::max(evals(2), 1e-12)) {
        throw DegenerateGeometryError("solve_pnp: fiducials are collinear");
    }
    const bool coplanar = evals(0) < 1e-9 * evals(2);

    if (!coplanar && pixels.size() < 6) {
        throw std::invalid_argument(
            "solve_pnp: non-planar sets need at least 6 correspondences");
    }

    // Columns ordered e1, e2 (dominant plane), normal; forced right-handed
    // so the basis is a rotation. For non-planar clouds this is the
    // best-fit plane used by the fallback initializer.
    Eigen::Matrix3d axes;
    axes.col(0) = eig.eigenvectors().col(2);
    axes.col(1) = eig.eigenvectors().col(1);
    axes.col(2) = axes.col(0).cross(axes.col(1));

    // Initialize by DLT where the geometry supports it, by the plane
    // homography otherwise; refine every candidate and keep the best fit.
    std::vector<RigidTransform> inits;
    std::string failure = "pnp: no usable initialization";
    if (!coplanar) {
        try {
            inits.push_back(init_dlt(corr, intr));
        } catch (const DegenerateGeometryError& e) {
            failure = e.what();
        }
    }
    try {
        inits.push_back(init_planar(corr, intr, centroid, axes));
    } catch (const DegenerateGeometryError& e) {
        failure = e.what();
    }
    if (inits.empty()) {
        throw DegenerateGeometryError(failure);
    }

    PnpSolution sol;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const RigidTransform& init : inits) {
        RigidTransform pose;
        try {
            pose = refine_pnp(init, corr, intr);
        } catch (const DegenerateGeometryError&) {
            continue;
        }
        const double cost = reprojection_cost(pose, corr, intr);
        if (cost < best_cost) {
            best_cost = cost;
            sol.camera_from_prop = pose;
        }
    }
    if (std::isinf(best_cost)) {
        throw DegenerateGeometryError(failure);
    }
    sol.point_count = static_cast<int>(corr.size());
    sol.rms_reprojection = std::sqrt(best_cost / static_cast<double>(corr.size()));
    return sol;
}

namespace {

/// Per-(frame, camera) PnP solves that met the minimum-correspondence bar.
std::map<int, std::map<std::string, PnpSolution>> per_frame_pnp(
    std::span<const FiducialObservation> prop_obs, const CalibrationProp& prop,
    const std::map<std::string, CameraIntrinsics>& cameras) {
    const auto grouped = group_by_frame_camera(prop_obs, prop.fiducial_points.size());
    const std::size_t min_points = prop.planar ? 4 : 6;
    std::map<int, std::map<std::string, PnpSolution>> out;
    for (const auto& [key, pixels] : grouped.groups) {
        const auto& [frame, camera_id] = key;
        auto cam_it = cameras.find(camera_id);
        if (cam_it == cameras.end()) {
            throw std::invalid_argument("observation references unknown camera '" +
                                        camera_id + "'");
        }
        if (pixels.size() < min_points) {
            continue;
        }
        try {
            out[frame][camera_id] = solve_pnp(prop.fiducial_points, pixels, cam_it->second);
        } catch (const DegenerateGeometryError&) {
            // Unlucky geometry in one frame is not fatal; other frames carry it.
        }
    }
    return out;
}

std::map<std::string, PnpSolution> anchor_pnp(
    std::span<const FiducialObservation> anchor_obs, const WorldAnchor& anchor,
    const std::map<std::string, CameraIntrinsics>& cameras) {
    // All frames of one camera stack into a single solve; the marker is
    // static, so extra frames just average the pixel noise down.
    std::map<std::string, std::vector<std::pair<int, PixelObservation>>> collected;
    for (const auto& o : anchor_obs) {
        if (o.point_id < 0 ||
            static_cast<std::size_t>(o.point_id) >= anchor.fiducial_points_local.size()) {
            throw std::invalid_argument("anchor observation references fiducial " +
                                        std::to_string(o.point_id) +
                                        " outside the marker");
        }
        collected[o.camera_id].push_back({o.frame_id, {o.point_id, o.u, o.v}});
    }
    std::map<std::string, std::vector<PixelObservation>> per_camera;
    for (auto& [camera_id, rows] : collected) {
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            return std::tie(a.first, a.second.point_id, a.second.u, a.second.v) <
                   std::tie(b.first, b.second.point_id, b.second.u, b.second.v);
        });
        auto& pixels = per_camera[camera_id];
        pixels.reserve(rows.size());
        for (const auto& [frame, px] : rows) {
            pixels.push_back(px);
        }
    }
    const std::size_t min_points = anchor.planar ? 4 : 6;
    std::map<std::string, PnpSolution> out;
    for (const auto& [camera_id, pixels] : per_camera) {
        auto cam_it = cameras.find(camera_id);
        if (cam_it == cameras.end()) {
            throw std::invalid_argument("anchor observation references unknown camera '" +
                                        camera_id + "'");
        }
        if (pixels.size() < min_points) {
            continue;
        }
        try {
            out[camera_id] =
                solve_pnp(anchor.fiducial_points_local, pixels, cam_it->second);
        } catch (const DegenerateGeometryError&) {
        }
    }
    return out;
}

/// World pose of the prop in every frame where at least one placed camera
/// solved PnP (chordal mean over the contributing cameras).
std::map<int, RigidTransform> prop_world_poses(
    const std::map<int, std::map<std::string, PnpSolution>>& pnp,
    const std::map<std::string, RigidTransform>& world_from_camera) {
    std::map<int, RigidTransform> out;
    for (const auto& [frame, solutions] : pnp) {
        AverageAccumulator acc;
        for (const auto& [camera_id, sol] : solutions) {
            auto it = world_from_camera.find(camera_id);
            if (it == world_from_camera.end()) {
                continue;
            }
            acc.add(compose(it->second, sol.camera_from_prop));
        }
        if (acc.count() > 0) {
            out[frame] = acc.mean();
        }
    }
    return out;
}

std::map<std::string, double> per_camera_rms_errors(
    std::span<const FiducialObservation> prop_obs,
    std::span<const FiducialObservation> anchor_obs, const CalibrationProp& prop,
    const WorldAnchor& anchor, const std::map<std::string, CameraIntrinsics>& cameras,
    const std::map<std::string, RigidTransform>& world_from_camera,
    const std::map<int, RigidTransform>& prop_poses) {
    std::map<std::string, double> sum;
    std::map<std::string, int> count;
    auto add_residual = [&](const std::string& camera_id, const Vec3& p_world, double u,
                            double v) {
        auto pose_it = world_from_camera.find(camera_id);
        auto intr_it = cameras.find(camera_id);
        if (pose_it == world_from_camera.end() || intr_it == cameras.end()) {
            return;
        }
        const Vec3 p = transform_point(invert(pose_it->second), p_world);
        if (p.z <= 0.0) {
            return;
        }
        const double du = intr_it->second.fx * p.x / p.z + intr_it->second.cx - u;
        const double dv = intr_it->second.fy * p.y / p.z + intr_it->second.cy - v;
        sum[camera_id] += du * du + dv * dv;
        count[camera_id] += 1;
    };
    for (const auto& o : prop_obs) {
        auto frame_it = prop_poses.find(o.frame_id);
        if (frame_it == prop_poses.end()) {
            continue;
        }
        add_residual(o.camera_id,
                     transform_point(frame_it->second,
                                     prop.fiducial_points[static_cast<std::size_t>(o.point_id)]),
                     o.u, o.v);
    }
    for (const auto& o : anchor_obs) {
        add_residual(o.camera_id,
                     anchor.fiducial_points_world[static_cast<std::size_t>(o.point_id)],
                     o.u, o.v);
    }
    std::map<std::string, double> rms;
    for (const auto& [camera_id, unused] : world_from_camera) {
        const int n = count.count(camera_id) ? count.at(camera_id) : 0;
        rms[camera_id] = n > 0 ? std::sqrt(sum.at(camera_id) / n) : 0.0;
    }
    return rms;
}

} // namespace

CalibrationResult estimate_extrinsics(std::span<const FiducialObservation> prop_obs,
                                      std::span<const FiducialObservation> anchor_obs,
                                      const CalibrationProp& prop,
                                      const WorldAnchor& anchor,
                                      const std::map<std::string, CameraIntrinsics>& cameras) {
    const auto pnp = per_frame_pnp(prop_obs, prop, cameras);
    const auto anchored = anchor_pnp(anchor_obs, anchor, cameras);
    if (anchored.empty()) {
        throw DisconnectedGraphError("the anchor marker was never observed");
    }

    // Covisibility edges, averaged over the frames both cameras solved.
    std::map<std::pair<std::string, std::string>, AverageAccumulator> pair_acc;
    for (const auto& [frame, solutions] : pnp) {
        for (auto i = solutions.begin(); i != solutions.end(); ++i) {
            for (auto j = std::next(i); j != solutions.end(); ++j) {
                pair_acc[{i->first, j->first}].add(
                    compose(i->second.camera_from_prop,
                            invert(j->second.camera_from_prop)));
            }
        }
    }
    std::map<std::pair<std::string, std::string>, RigidTransform> pair_mean;
    std::map<std::string, std::set<std::string>> adjacency;
    for (const auto& [key, acc] : pair_acc) {
        pair_mean[key] = acc.mean();
        adjacency[key.first].insert(key.second);
        adjacency[key.second].insert(key.first);
    }

    CalibrationResult result;
    // Every anchor-observing camera is placed by its own marker solve; they
    // seed the propagation jointly.
    std::set<std::string> frontier;
    for (const auto& [camera_id, sol] : anchored) {
        result.world_from_camera[camera_id] =
            compose(anchor.world_from_anchor, invert(sol.camera_from_prop));
        frontier.insert(camera_id);
    }
    while (!frontier.empty()) {
        const std::string current = *frontier.begin();
        frontier.erase(frontier.begin());
        auto adj_it = adjacency.find(current);
        if (adj_it == adjacency.end()) {
            continue;
        }
        for (const std::string& neighbor : adj_it->second) {
            if (result.world_from_camera.count(neighbor)) {
                continue;
            }
            const auto forward = pair_mean.find({current, neighbor});
            const RigidTransform relative = forward != pair_mean.end()
                                                ? forward->second
                                                : invert(pair_mean.at({neighbor, current}));
            result.world_from_camera[neighbor] =
                compose(result.world_from_camera.at(current), relative);
            frontier.insert(neighbor);
        }
    }

    std::vector<std::string> unreachable;
    for (const auto& [camera_id, unused] : cameras) {
        if (!result.world_from_camera.count(camera_id)) {
            unreachable.push_back(camera_id);
        }
    }
    if (!unreachable.empty()) {
        std::ostringstream msg;
        msg << "cameras unreachable from the anchored component:";
        for (const auto& id : unreachable) {
            msg << ' ' << id;
        }
        throw DisconnectedGraphError(msg.str());
    }

    result.frames_used = static_cast<int>(pnp.size());
    result.per_camera_rms = per_camera_rms_errors(
        prop_obs, anchor_obs, prop, anchor, cameras, result.world_from_camera,
        prop_world_poses(pnp, result.world_from_camera));
    return result;
}

namespace {

struct BundleProblem {
    std::vector<std::string> camera_ids; // sorted
    std::vector<RigidTransform> camera_from_world;
    std::vector<int> frame_ids; // sorted
    std::vector<RigidTransform> world_from_prop;

    struct PropResidual {
        std::size_t cam = 0;
        std::size_t frame = 0;
        Vec3 point; // prop-local
        double u = 0.0;
        double v = 0.0;
    };
    struct AnchorResidual {
        std::size_t cam = 0;
        Vec3 point; // world
        double u = 0.0;
        double v = 0.0;
    };
    std::vector<PropResidual> prop_residuals;
    std::vector<AnchorResidual> anchor_residuals;
    std::vector<CameraIntrinsics> intrinsics; // parallel to camera_ids

    std::size_t var_count() const {
        return 6 * (camera_from_world.size() + world_from_prop.size());
    }
};

double bundle_cost(const BundleProblem& p, const std::vector<RigidTransform>& cams,
                   const std::vector<RigidTransform>& props) {
    double cost = 0.0;
    auto pixel_residual = [&](std::size_t cam, const Vec3& p_world, double u, double v,
                              double& du, double& dv) {
        const Vec3 pc = transform_point(cams[cam], p_world);
        if (pc.z <= 1e-9) {
            return false;
        }
        const auto& k = p.intrinsics[cam];
        du = k.fx * pc.x / pc.z + k.cx - u;
        dv = k.fy * pc.y / pc.z + k.cy - v;
        return true;
    };
    for (const auto& r : p.prop_residuals) {
        double du = 0.0, dv = 0.0;
        if (!pixel_residual(r.cam, transform_point(props[r.frame], r.point), r.u, r.v, du,
                            dv)) {
            return std::numeric_limits<double>::infinity();
        }
        cost += du * du + dv * dv;
    }
    for (const auto& r : p.anchor_residuals) {
        double du = 0.0, dv = 0.0;
        if (!pixel_residual(r.cam, r.point, r.u, r.v, du, dv)) {
            return std::numeric_limits<double>::infinity();
        }
        cost += du * du + dv * dv;
    }
    return cost;
}

} // namespace

RefineOutcome refine_global(const CalibrationResult& initial,
                            std::span<const FiducialObservation> prop_obs,
                            std::span<const FiducialObservation> anchor_obs,
                            const CalibrationProp& prop, const WorldAnchor& anchor,
                            const std::map<std::string, CameraIntrinsics>& cameras) {
    BundleProblem problem;
    for (const auto& [camera_id, pose] : initial.world_from_camera) {
        problem.camera_ids.push_back(camera_id);
        problem.camera_from_world.push_back(invert(pose));
        auto it = cameras.find(camera_id);
        if (it == cameras.end()) {
            throw std::invalid_argument("refine_global: no intrinsics for camera '" +
                                        camera_id + "'");
        }
        problem.intrinsics.push_back(it->second);
    }
    auto camera_index = [&](const std::string& id) -> std::optional<std::size_t> {
        const auto it =
            std::lower_bound(problem.camera_ids.begin(), problem.camera_ids.end(), id);
        if (it == problem.camera_ids.end() || *it != id) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - problem.camera_ids.begin());
    };

    const auto pnp = per_frame_pnp(prop_obs, prop, cameras);
    const auto prop_poses = prop_world_poses(pnp, initial.world_from_camera);
    for (const auto& [frame, pose] : prop_poses) {
        problem.frame_ids.push_back(frame);
        problem.world_from_prop.push_back(pose);
    }
    auto frame_index = [&](int frame) -> std::optional<std::size_t> {
        const auto it =
            std::lower_bound(problem.frame_ids.begin(), problem.frame_ids.end(), frame);
        if (it == problem.frame_ids.end() || *it != frame) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - problem.frame_ids.begin());
    };

    for (const auto& o : prop_obs) {
        const auto cam = camera_index(o.camera_id);
        const auto frame = frame_index(o.frame_id);
        if (!cam || !frame) {
            continue;
        }
        problem.prop_residuals.push_back(
            {*cam, *frame, prop.fiducial_points[static_cast<std::size_t>(o.point_id)],
             o.u, o.v});
    }
    for (const auto& o : anchor_obs) {
        const auto cam = camera_index(o.camera_id);
        if (!cam) {
            continue;
        }
        problem.anchor_residuals.push_back(
            {*cam, anchor.fiducial_points_world[static_cast<std::size_t>(o.point_id)],
             o.u, o.v});
    }
    // Accumulation order fixed regardless of the input observation order.
    std::sort(problem.prop_residuals.begin(), problem.prop_residuals.end(),
              [](const auto& a, const auto& b) {
                  return std::tie(a.cam, a.frame, a.point.x, a.point.y, a.point.z, a.u,
                                  a.v) < std::tie(b.cam, b.frame, b.point.x, b.point.y,
                                                  b.point.z, b.u, b.v);
              });
    std::sort(problem.anchor_residuals.begin(), problem.anchor_residuals.end(),
              [](const auto& a, const auto& b) {
                  return std::tie(a.cam, a.point.x, a.point.y, a.point.z, a.u, a.v) <
                         std::tie(b.cam, b.point.x, b.point.y, b.point.z, b.u, b.v);
              });

    RefineOutcome outcome;
    outcome.initial_cost =
        bundle_cost(problem, problem.camera_from_world, problem.world_from_prop);
    outcome.final_cost = outcome.initial_cost;
    if (std::isinf(outcome.initial_cost) || problem.var_count() == 0 ||
        (problem.prop_residuals.empty() && problem.anchor_residuals.empty())) {
        outcome.result = initial;
        return outcome;
    }

    const std::size_t n_cams = problem.camera_from_world.size();
    const auto n_vars = static_cast<Eigen::Index>(problem.var_count());
    std::vector<RigidTransform> cams = problem.camera_from_world;
    std::vector<RigidTransform> props = problem.world_from_prop;
    double cost = outcome.initial_cost;
    double lambda = 1e-6;
    bool ever_accepted = false;

    for (int iter = 0; iter < 100; ++iter) {
        ++outcome.iterations;
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_vars, n_vars);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n_vars);
        auto accumulate = [&](std::size_t cam_idx, std::optional<std::size_t> frame_idx,
                              const Vec3& point_world, double u, double v) {
            const Vec3 pc = transform_point(cams[cam_idx], point_world);
            const Eigen::Vector3d p = to_eigen(pc);
            const auto& k = problem.intrinsics[cam_idx];
            Eigen::Matrix<double, 2, 3> jproj;
            jproj << k.fx / p.z(), 0, -k.fx * p.x() / (p.z() * p.z()), 0, k.fy / p.z(),
                -k.fy * p.y() / (p.z() * p.z());
            const Eigen::Vector2d r(k.fx * p.x() / p.z() + k.cx - u,
                                    k.fy * p.y() / p.z() + k.cy - v);
            Eigen::Matrix<double, 2, 6> jc;
            jc.block<2, 3>(0, 0) = -jproj * skew(p);
            jc.block<2, 3>(0, 3) = jproj;
            const auto ci = static_cast<Eigen::Index>(6 * cam_idx);
            h.block<6, 6>(ci, ci) += jc.transpose() * jc;
            g.segment<6>(ci) += jc.transpose() * r;
            if (frame_idx) {
                // y = world point of the fiducial; perturbing the prop pose
                // moves it by [-skew(y) | I] before the camera rotation.
                Eigen::Matrix3d rcw;
                {
                    const auto m = cams[cam_idx].rotation.matrix();
                    rcw << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
                }
                const Eigen::Vector3d y = to_eigen(point_world);
                Eigen::Matrix<double, 2, 6> jf;
                jf.block<2, 3>(0, 0) = -jproj * rcw * skew(y);
                jf.block<2, 3>(0, 3) = jproj * rcw;
                const auto fi = static_cast<Eigen::Index>(6 * (n_cams + *frame_idx));
                h.block<6, 6>(fi, fi) += jf.transpose() * jf;
                h.block<6, 6>(ci, fi) += jc.transpose() * jf;
                h.block<6, 6>(fi, ci) += jf.transpose() * jc;
                g.segment<6>(fi) += jf.transpose() * r;
            }
        };
        for (const auto& res : problem.prop_residuals) {
            accumulate(res.cam, res.frame, transform_point(props[res.frame], res.point),
                       res.u, res.v);
        }
        for (const auto& res : problem.anchor_residuals) {
            accumulate(res.cam, std::nullopt, res.point, res.u, res.v);
        }

        bool accepted = false;
        while (lambda <= 1e10) {
            Eigen::MatrixXd damped = h;
            for (Eigen::Index d = 0; d < n_vars; ++d) {
                damped(d, d) += lambda * std::max(h(d, d), 1e-12);
            }
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            const Eigen::VectorXd delta = ldlt.solve(-g);
            if (ldlt.info() == Eigen::Success && delta.allFinite()) {
                std::vector<RigidTransform> cams_new = cams;
                std::vector<RigidTransform> props_new = props;
                for (std::size_t c = 0; c < n_cams; ++c) {
                    const auto ci = static_cast<Eigen::Index>(6 * c);
                    cams_new[c] = apply_delta(cams[c], delta.segment<3>(ci),
                                              delta.segment<3>(ci + 3));
                }
                for (std::size_t f = 0; f < props.size(); ++f) {
                    const auto fi = static_cast<Eigen::Index>(6 * (n_cams + f));
                    props_new[f] = apply_delta(props[f], delta.segment<3>(fi),
                                               delta.segment<3>(fi + 3));
                }
                const double cost_new = bundle_cost(problem, cams_new, props_new);
                if (cost_new <= cost) {
                    const double drop = cost - cost_new;
                    cams = std::move(cams_new);
                    props = std::move(props_new);
                    cost = cost_new;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    accepted = true;
                    ever_accepted = true;
                    if (drop <= 1e-12 * std::max(cost, 1e-300)) {
                        outcome.converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!accepted || outcome.converged) {
            break;
        }
    }
    if (!ever_accepted) {
        // Divergence: lambda ran out without a single cost decrease.
        outcome.result = initial;
        outcome.final_cost = outcome.initial_cost;
        outcome.converged = false;
        return outcome;
    }

    outcome.converged = true;
    outcome.final_cost = cost;
    CalibrationResult refined;
    refined.frames_used = initial.frames_used;
    for (std::size_t c = 0; c < n_cams; ++c) {
        refined.world_from_camera[problem.camera_ids[c]] = invert(cams[c]);
    }
    std::map<int, RigidTransform> refined_props;
    for (std::size_t f = 0; f < props.size(); ++f) {
        refined_props[problem.frame_ids[f]] = props[f];
    }
    refined.per_camera_rms =
        per_camera_rms_errors(prop_obs, anchor_obs, prop, anchor, cameras,
                              refined.world_from_camera, refined_props);
    outcome.result = std::move(refined);
    return outcome;
}

PoseError pose_error(const RigidTransform& estimated, const RigidTransform& truth) {
    PoseError e;
    e.translation_error = (estimated.translation - truth.translation).norm();
    e.rotation_error = geodesic_angle(estimated.rotation, truth.rotation);
    return e;
}

ExperimentReport run_calibration_experiment(const CalibrationExperimentParams& params) {
    for (const double r : params.radii) {
        if (!(r > 0.0)) {
            throw std::invalid_argument("calibration experiment: radii must be positive");
        }
    }
    if (params.trials < 1) {
        throw std::invalid_argument("calibration experiment: trials must be at least 1");
    }
    if (params.camera_count < 1 || params.frames < 1) {
        throw std::invalid_argument(
            "calibration experiment: camera count and frames must be at least 1");
    }
    std::vector<CalibrationProp> props = params.props;
    if (props.empty()) {
        props = {planar_square_prop(), cluster8_prop()};
    }

    const std::size_t combos =
        params.radii.size() * props.size() * static_cast<std::size_t>(params.trials);
    ExperimentReport report(combos);

    parallel_for(combos, params.threads, [&](std::size_t index) {
        const std::size_t trials = static_cast<std::size_t>(params.trials);
        const std::size_t radius_idx = index / (props.size() * trials);
        const std::size_t prop_idx = (index / trials) % props.size();
        const std::size_t trial = index % trials;
        const double radius = params.radii[radius_idx];
        const CalibrationProp& prop = props[prop_idx];

        RngStream rng =
            derive_stream(params.master_seed, "calibration", radius_idx, prop_idx, trial);

        const Vec3 circle_center{0.0, 0.0, 1.2};
        std::map<std::string, CameraIntrinsics> intrinsics;
        std::map<std::string, RigidTransform> truth;
        std::vector<CameraModel> cams;
        for (int k = 0; k < params.camera_count; ++k) {
            const double bearing =
                2.0 * std::numbers::pi * k / static_cast<double>(params.camera_count);
            CameraModel cam = preset(CameraPreset::KinectV2);
            cam.id = "cam" + std::to_string(k);
            cam.pixel_noise_sigma = params.pixel_noise_sigma;
            cam.world_from_camera = look_at(
                {radius * std::cos(bearing), radius * std::sin(bearing), 1.2},
                circle_center, {0.0, 0.0, 1.0});
            intrinsics[cam.id] = cam.intrinsics;
            truth[cam.id] = cam.world_from_camera;
            cams.push_back(std::move(cam));
        }

        // Anchor marker 1.2 m in front of camera 0, facing it. Keeping that
        // distance fixed across radii keeps the world-frame fix equally
        // strong in every configuration; a far, small marker would leak its
        // own pose ambiguity into every camera.
        const RigidTransform anchor_pose{
            Rotation::rot_z(0.0) * Rotation::rot_y(std::numbers::pi / 2.0),
            Vec3{radius - 1.2, 0.0, 0.8}};
        const WorldAnchor anchor = default_world_anchor(anchor_pose, 0.3);

        // The prop sweeps a full turn of facing azimuths across the frames
        // so every adjacent camera pair co-observes several frames.
        std::vector<FiducialObservation> prop_obs;
        std::vector<FiducialObservation> anchor_obs;
        for (int f = 0; f < params.frames; ++f) {
            const double azimuth =
                2.0 * std::numbers::pi * f / static_cast<double>(params.frames);
            PropWorkspace ws;
            ws.box_min = circle_center - Vec3{0.5, 0.5, 0.5};
            ws.box_max = circle_center + Vec3{0.5, 0.5, 0.5};
            ws.nominal_rotation =
                Rotation::rot_z(azimuth) * Rotation::rot_y(std::numbers::pi / 2.0);
            ws.cone_half_angle = 40.0 * std::numbers::pi / 180.0;
            const RigidTransform world_from_prop = sample_prop_poses(ws, 1, rng).front();
            for (const CameraModel& cam : cams) {
                for (const auto& px : observe_fiducials(cam, prop, world_from_prop, rng)) {
                    prop_obs.push_back({f, cam.id, px.point_id, px.u, px.v});
                }
                CalibrationProp marker;
                marker.name = "anchor";
                marker.planar = anchor.planar;
                marker.fiducial_points = anchor.fiducial_points_local;
                for (const auto& px :
                     observe_fiducials(cam, marker, anchor.world_from_anchor, rng)) {
                    anchor_obs.push_back({f, cam.id, px.point_id, px.u, px.v});
                }
            }
        }

        if (!params.observation_dump_dir.empty()) {
            std::vector<FiducialObservation> all = prop_obs;
            all.insert(all.end(), anchor_obs.begin(), anchor_obs.end());
            write_observation_dump(
                all, params.observation_dump_dir + "/observations_r" +
                         std::to_string(radius_idx) + "_p" + std::to_string(prop_idx) +
                         "_t" + std::to_string(trial) + ".jsonl");
        }

        CalibrationResult result =
            estimate_extrinsics(prop_obs, anchor_obs, prop, anchor, intrinsics);
        if (params.refine) {
            result = refine_global(result, prop_obs, anchor_obs, prop, anchor, intrinsics)
                         .result;
        }

        double trans_sum = 0.0;
        double rot_sum = 0.0;
        for (const auto& [camera_id, pose] : result.world_from_camera) {
            const PoseError e = pose_error(pose, truth.at(camera_id));
            trans_sum += e.translation_error;
            rot_sum += e.rotation_error;
        }
        const auto n = static_cast<double>(result.world_from_camera.size());
        ExperimentRow row;
        row.radius_m = radius;
        row.prop = prop.name;
        row.trial = static_cast<int>(trial);
        row.mean_trans_err_m = trans_sum / n;
        row.mean_rot_err_rad = rot_sum / n;
        report[index] = std::move(row);
    });

    return report;
}

} // namespace skelsim
