#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "asmpose/error.hpp"
#include "asmpose/geometry.hpp"

namespace asmpose {

// Per-pixel depth in meters; 0 marks a hole (no measurement).
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
    double& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
    bool in_bounds(int u, int v) const { return u >= 0 && u < width && v >= 0 && v < height; }

    static DepthImage zeros(int w, int h) {
        DepthImage img;
        img.width = w;
        img.height = h;
        img.data.assign(static_cast<std::size_t>(w) * h, 0.0);
        return img;
    }

    void validate() const {
        if (width <= 0 || height <= 0 || data.size() != static_cast<std::size_t>(width) * height)
            fail(ErrorCode::InvalidArgument, "depth image dimensions inconsistent with buffer");
        for (double d : data)
            if (!(d >= 0) || !std::isfinite(d))
                fail(ErrorCode::InvalidArgument, "depth values must be finite and >= 0");
    }
};

struct BoundingBox {
    double x = 0;  // top-left, pixels
    double y = 0;
    double w = 0;
    double h = 0;

    bool contains(double u, double v) const {
        return u >= x && u <= x + w && v >= y && v <= y + h;
    }
    void validate(int image_w, int image_h) const {
        if (!(w > 0) || !(h > 0)) fail(ErrorCode::InvalidArgument, "bounding box extent must be positive");
        if (x + w < 0 || y + h < 0 || x >= image_w || y >= image_h)
            fail(ErrorCode::InvalidArgument, "bounding box does not intersect the image");
    }
};

struct RefineConfig {
    int surface_sample_count = 500;
    double near_fraction = 0.3;     // fraction of projected points kept, nearest first
    double weight_scale = 0.01;     // sigma of the residual weighting kernel, meters
    int min_valid_points = 10;

    void validate() const {
        if (!(near_fraction > 0) || near_fraction > 1)
            fail(ErrorCode::InvalidArgument, "near_fraction must be in (0,1]");
        if (!(weight_scale > 0)) fail(ErrorCode::InvalidArgument, "weight_scale must be > 0");
        if (min_valid_points < 3 || surface_sample_count < min_valid_points)
            fail(ErrorCode::InvalidArgument,
                 "need surface_sample_count >= min_valid_points >= 3");
    }
};

struct RefineResult {
    RigidTransform pose;
    double shift = 0.0;       // estimated depth correction E, meters
    int valid_points = 0;     // residual count that entered the estimate
    bool applied = false;     // false: too few valid points, pose returned unchanged
};

// Weighted mean of depth residuals with a normalized Gaussian kernel around
// zero. Weights are shifted by the smallest |d| before exponentiation so a
// common offset never underflows the whole sum.
inline double weighted_shift(std::span<const double> residuals, double sigma) {
    if (residuals.empty()) fail(ErrorCode::InvalidArgument, "weighted_shift on empty residuals");
    if (!(sigma > 0)) fail(ErrorCode::InvalidArgument, "sigma must be > 0");
    double dmin2 = std::numeric_limits<double>::infinity();
    for (double d : residuals) dmin2 = std::min(dmin2, d * d);
    const double inv_s2 = 1.0 / (sigma * sigma);
    double wsum = 0, esum = 0;
    for (double d : residuals) {
        const double w = std::exp(-(d * d - dmin2) * inv_s2);
        wsum += w;
        esum += w * d;
    }
    return esum / wsum;
}

// Depth-driven translation refinement: compare the predicted depth of visible
// surface points against the measured depth image, robustly average the
// difference, and slide the pose along the camera ray through its origin.
// The rotation is returned untouched.
inline RefineResult refine_translation(const RigidTransform& pose_dl,
                                       const PointCloud3& surface_points,
                                       const BoundingBox& bbox, const DepthImage& depth,
                                       const CameraIntrinsics& cam, const RefineConfig& cfg = {}) {
    cfg.validate();
    cam.validate();
    depth.validate();
    if (depth.width != cam.width || depth.height != cam.height)
        fail(ErrorCode::InvalidArgument, "depth image size does not match intrinsics");
    bbox.validate(cam.width, cam.height);
    if (surface_points.points.empty())
        fail(ErrorCode::InvalidArgument, "no surface points to refine with");
    if (!(pose_dl.translation.z() > 0))
        fail(ErrorCode::ZeroDepthAxis, "pose depth axis must be positive for ray scaling");

    // (1) model points into the camera frame, (2) project and keep those that
    // land inside the detection box
    const PointCloud3 cam_points = transform_points(surface_points, pose_dl);
    struct Projected {
        double u, v, z;
    };
    std::vector<Projected> kept;
    kept.reserve(cam_points.size());
    for (const auto& p : cam_points.points) {
        if (!(p.z() > 0)) continue;
        const Eigen::Vector2d px = project_point(p, cam);
        if (!bbox.contains(px.x(), px.y())) continue;
        kept.push_back({px.x(), px.y(), p.z()});
    }

    // (3) nearest slice toward the camera: only front-surface points can be
    // seen by a depth camera
    std::sort(kept.begin(), kept.end(), [](const Projected& a, const Projected& b) {
        return a.z < b.z;
    });
    const std::size_t keep_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.near_fraction * kept.size())));
    if (kept.size() > keep_count) kept.resize(keep_count);

    // (4) residual = measured - predicted depth, nearest-pixel lookup, holes skipped
    std::vector<double> residuals;
    residuals.reserve(kept.size());
    for (const auto& p : kept) {
        const int u = static_cast<int>(std::lround(p.u));
        const int v = static_cast<int>(std::lround(p.v));
        if (!depth.in_bounds(u, v)) continue;
        const double measured = depth.at(u, v);
        if (measured <= 0) continue;
        residuals.push_back(measured - p.z);
    }

    RefineResult result;
    result.pose = pose_dl;
    result.valid_points = static_cast<int>(residuals.size());
    if (result.valid_points < cfg.min_valid_points) return result;  // flagged: applied=false

    // (5) robust shift estimate, (6) slide along the ray through the origin
    const double shift = weighted_shift(residuals, cfg.weight_scale);
    const double tz = pose_dl.translation.z();
    result.shift = shift;
    result.pose.translation = pose_dl.translation * ((tz + shift) / tz);
    result.applied = true;
    return result;
}

}  // namespace asmpose
