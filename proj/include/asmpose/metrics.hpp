#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asmpose/error.hpp"
#include "asmpose/geometry.hpp"

namespace asmpose {

struct PoseErrorRecord {
    std::string part_id;
    double e_trans_mm = 0.0;
    double e_rot_deg = 0.0;
    double add_mm = 0.0;
    bool add_within_threshold = false;
    bool detected = true;  // undetected frames carry add = +inf
};

// Average model-point distance between the two poses, millimeters. The
// symmetric variant matches each point to its nearest transformed counterpart.
inline double add_error(const RigidTransform& est, const RigidTransform& gt,
                        const PointCloud3& model_points, bool symmetric) {
    if (model_points.points.empty()) fail(ErrorCode::InvalidArgument, "add_error needs points");
    const auto& pts = model_points.points;
    double sum = 0.0;
    if (!symmetric) {
        for (const auto& p : pts) sum += (est.apply(p) - gt.apply(p)).norm();
    } else {
        std::vector<Eigen::Vector3d> gt_pts;
        gt_pts.reserve(pts.size());
        for (const auto& p : pts) gt_pts.push_back(gt.apply(p));
        for (const auto& p : pts) {
            const Eigen::Vector3d e = est.apply(p);
            double best = std::numeric_limits<double>::infinity();
            for (const auto& g : gt_pts) best = std::min(best, (e - g).squaredNorm());
            sum += std::sqrt(best);
        }
    }
    return 1000.0 * sum / static_cast<double>(pts.size());
}

// (translation error in mm, geodesic rotation error in degrees)
inline std::pair<double, double> pose_errors(const RigidTransform& est, const RigidTransform& gt) {
    const double e_t = 1000.0 * (est.translation - gt.translation).norm();
    const double e_r = rotation_angle_deg(est.rotation, gt.rotation);
    return {e_t, e_r};
}

// Percentage of records whose ADD clears the threshold (default 10 cm).
inline double add_accuracy(std::span<const PoseErrorRecord> records, double threshold_mm = 100.0) {
    if (records.empty()) fail(ErrorCode::InvalidArgument, "add_accuracy on empty records");
    std::size_t hits = 0;
    for (const auto& r : records)
        if (r.add_mm < threshold_mm) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

struct StateScore {
    int state_id = 0;
    long support = 0;  // ground-truth occurrences
    double precision = 0.0;  // percent
    double recall = 0.0;
    double f1 = 0.0;
};

struct F1Report {
    std::vector<StateScore> per_state;
    double macro_f1 = 0.0;  // unweighted mean over states present in ground truth
};

inline F1Report state_f1(std::span<const int> predicted, std::span<const int> ground_truth,
                         int state_count) {
    if (predicted.size() != ground_truth.size())
        fail(ErrorCode::InvalidArgument, "state_f1: sequence lengths differ");
    if (predicted.empty()) fail(ErrorCode::InvalidArgument, "state_f1: empty sequences");
    std::vector<long> tp(state_count, 0), fp(state_count, 0), fn(state_count, 0),
        support(state_count, 0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i], g = ground_truth[i];
        if (p < 0 || p >= state_count || g < 0 || g >= state_count)
            fail(ErrorCode::InvalidArgument, "state id outside [0, state_count)");
        ++support[g];
        if (p == g) {
            ++tp[p];
        } else {
            ++fp[p];
            ++fn[g];
        }
    }

    F1Report report;
    double f1_sum = 0.0;
    int present = 0;
    for (int s = 0; s < state_count; ++s) {
        StateScore score;
        score.state_id = s;
        score.support = support[s];
        const long denom_p = tp[s] + fp[s];
        const long denom_r = tp[s] + fn[s];
        score.precision = denom_p > 0 ? 100.0 * tp[s] / denom_p : 0.0;
        score.recall = denom_r > 0 ? 100.0 * tp[s] / denom_r : 0.0;
        score.f1 = (score.precision + score.recall) > 0
                       ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                       : 0.0;
        report.per_state.push_back(score);
        if (support[s] > 0) {
            f1_sum += score.f1;
            ++present;
        }
    }
    report.macro_f1 = present > 0 ? f1_sum / present : 0.0;
    return report;
}

struct PartSummary {
    std::string part_id;
    long frames = 0;           // frames where the part appears in ground truth
    long detected = 0;
    double mean_e_trans_mm = 0.0;  // over detected frames
    double mean_e_rot_deg = 0.0;
    double add_accuracy_pct = 0.0;
    double miss_rate_pct = 0.0;
};

struct SequenceReport {
    std::string assembly_id;
    long frame_count = 0;
    std::vector<PartSummary> per_part;
    double mean_e_trans_mm = 0.0;  // over all detected part-frames
    double mean_e_rot_deg = 0.0;
    double add_accuracy_pct = 0.0;
    double detection_miss_rate_pct = 0.0;
    F1Report state_scores;
    double mean_runtime_ms = 0.0;
};

}  // namespace asmpose
