#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "asmpose/error.hpp"

namespace asmpose {

// SE(3) pose: p_out = rotation * p_in + translation. Translations in meters.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Rodrigues exponential map.
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d& w) {
    const double theta = w.norm();
    if (theta < 1e-12) return Eigen::Matrix3d::Identity() + skew(w);
    const Eigen::Vector3d axis = w / theta;
    return Eigen::AngleAxisd(theta, axis).toRotationMatrix();
}

// Max deviation of R from a proper rotation (||R R^T - I||_inf and |det - 1|).
inline double rotation_drift(const Eigen::Matrix3d& r) {
    const Eigen::Matrix3d gram = r * r.transpose() - Eigen::Matrix3d::Identity();
    return std::max(gram.cwiseAbs().maxCoeff(), std::abs(r.determinant() - 1.0));
}

inline bool is_valid_rotation(const Eigen::Matrix3d& r, double tol = 1e-9) {
    return r.allFinite() && rotation_drift(r) <= tol;
}

// Nearest proper rotation in Frobenius norm (SVD projection).
inline Eigen::Matrix3d orthonormalized(const Eigen::Matrix3d& r) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0) u.col(2) = -u.col(2);
    return u * v.transpose();
}

// compose(a, b) applies b first, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform invert(const RigidTransform& t) {
    return {t.rotation.transpose(), -(t.rotation.transpose() * t.translation)};
}

// Quaternions are an I/O-boundary representation; normalized on ingest.
inline RigidTransform from_quaternion(double qw, double qx, double qy, double qz,
                                      const Eigen::Vector3d& translation) {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-12) fail(ErrorCode::InvalidArgument, "zero quaternion");
    q.normalize();
    return {q.toRotationMatrix(), translation};
}

// Geodesic distance on SO(3) in degrees, clamped into [0, 180].
inline double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
}

struct CameraIntrinsics {
    double fx = 600.0;
    double fy = 600.0;
    double cx = 640.0;
    double cy = 360.0;
    int width = 1280;
    int height = 720;

    void validate() const {
        if (!(fx > 0) || !(fy > 0)) fail(ErrorCode::InvalidArgument, "focal lengths must be positive");
        if (width <= 0 || height <= 0) fail(ErrorCode::InvalidArgument, "image size must be positive");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            fail(ErrorCode::InvalidArgument, "principal point outside image");
    }
};

enum class Frame { model, camera };

struct PointCloud3 {
    std::vector<Eigen::Vector3d> points;
    Frame frame = Frame::model;

    std::size_t size() const { return points.size(); }
    bool all_finite() const {
        for (const auto& p : points)
            if (!p.allFinite()) return false;
        return true;
    }
};

// 2D pixel point with an optional attached depth; depth 0 means "none".
struct PixelPoint {
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    double depth = 0.0;
};

struct PixelPointSet {
    std::vector<PixelPoint> points;
    std::size_t size() const { return points.size(); }
};

struct ProjectResult {
    PixelPointSet pixels;
    std::size_t culled = 0;  // points with z <= 0, dropped
};

// p_cam = R p_model + t; the result is tagged as camera frame.
inline PointCloud3 transform_points(const PointCloud3& points, const RigidTransform& pose) {
    if (points.frame != Frame::model) fail(ErrorCode::InvalidArgument, "expected model-frame cloud");
    if (!points.all_finite()) fail(ErrorCode::InvalidArgument, "non-finite point coordinates");
    PointCloud3 out;
    out.frame = Frame::camera;
    out.points.reserve(points.size());
    for (const auto& p : points.points) out.points.push_back(pose.apply(p));
    return out;
}

inline Eigen::Vector2d project_point(const Eigen::Vector3d& p, const CameraIntrinsics& cam) {
    return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

// Pinhole projection. Points behind the camera (z <= 0) are dropped and counted.
inline ProjectResult project(const PointCloud3& points, const CameraIntrinsics& cam) {
    if (points.frame != Frame::camera) fail(ErrorCode::InvalidArgument, "expected camera-frame cloud");
    cam.validate();
    ProjectResult out;
    out.pixels.points.reserve(points.size());
    for (const auto& p : points.points) {
        if (!(p.z() > 0)) {
            ++out.culled;
            continue;
        }
        out.pixels.points.push_back({project_point(p, cam), p.z()});
    }
    return out;
}

inline Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth,
                                   const CameraIntrinsics& cam) {
    if (!(depth > 0)) fail(ErrorCode::DepthHole, "backproject requires depth > 0");
    return {(pixel.x() - cam.cx) * depth / cam.fx, (pixel.y() - cam.cy) * depth / cam.fy, depth};
}

namespace detail {

// Lexicographic (x, y, z) order used to break distance ties so FPS output does
// not depend on input point order.
inline bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

}  // namespace detail

// Greedy farthest point sampling. The seed is the point farthest from the
// centroid; every following pick maximizes the minimum distance to the points
// already chosen. Ties resolve toward the lexicographically smallest point.
inline std::vector<int> farthest_point_sampling(const PointCloud3& cloud, int k) {
    const int n = static_cast<int>(cloud.size());
    if (k < 1) fail(ErrorCode::InvalidArgument, "farthest_point_sampling requires k >= 1");
    if (k > n) fail(ErrorCode::InvalidArgument, "farthest_point_sampling requires k <= point count");
    if (!cloud.all_finite()) fail(ErrorCode::InvalidArgument, "non-finite point coordinates");

    const auto& pts = cloud.points;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(n);

    int seed = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = (pts[i] - centroid).squaredNorm();
        if (d > best || (d == best && detail::lex_less(pts[i], pts[seed]))) {
            best = d;
            seed = i;
        }
    }

    std::vector<int> selected;
    selected.reserve(k);
    selected.push_back(seed);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    int last = seed;
    while (static_cast<int>(selected.size()) < k) {
        int next = -1;
        double next_dist = -1.0;
        for (int i = 0; i < n; ++i) {
            min_dist[i] = std::min(min_dist[i], (pts[i] - pts[last]).squaredNorm());
            if (min_dist[i] > next_dist ||
                (min_dist[i] == next_dist && next >= 0 && detail::lex_less(pts[i], pts[next]))) {
                next_dist = min_dist[i];
                next = i;
            }
        }
        selected.push_back(next);
        last = next;
    }
    return selected;
}

}  // namespace asmpose
