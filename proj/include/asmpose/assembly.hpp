#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "asmpose/error.hpp"
#include "asmpose/geometry.hpp"

namespace asmpose {

struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;

    bool empty() const { return faces.empty(); }
};

struct PartModel {
    std::string part_id;
    TriangleMesh mesh;            // meters, model frame
    PointCloud3 surface_points;   // FPS-sampled from the mesh surface
    PointCloud3 keypoints_3d;     // exactly 17, FPS-sampled
    bool symmetric = false;       // drives ADD-S
    std::vector<Eigen::Matrix3d> symmetries;  // discrete rotations, identity implied
};

struct AssemblyState {
    int state_id = 0;  // 0 = unassembled
    std::string name;
    std::set<std::string> member_parts;
    std::map<std::string, RigidTransform> relative_poses;  // part -> pose w.r.t. base part
    bool is_error_state = false;
};

struct AssemblyGraph {
    std::string assembly_id;
    std::string base_part;
    std::vector<PartModel> parts;
    std::vector<AssemblyState> states;
    std::vector<std::vector<int>> neighbors;  // per state id; error states have none

    int state_count() const { return static_cast<int>(states.size()); }

    const PartModel* find_part(const std::string& id) const {
        for (const auto& p : parts)
            if (p.part_id == id) return &p;
        return nullptr;
    }

    // Predecessor/successor links run along the chain of regular states in id
    // order. Error states are detected, not predicted, so they do not take
    // part in the neighbor relation.
    void build_neighbors() {
        neighbors.assign(states.size(), {});
        std::vector<int> chain;
        for (const auto& s : states)
            if (!s.is_error_state) chain.push_back(s.state_id);
        for (std::size_t i = 0; i < chain.size(); ++i) {
            if (i > 0) neighbors[chain[i]].push_back(chain[i - 1]);
            if (i + 1 < chain.size()) neighbors[chain[i]].push_back(chain[i + 1]);
        }
    }

    void validate() const {
        if (states.empty()) fail(ErrorCode::InvalidStateGraph, assembly_id + ": no states");
        if (!find_part(base_part))
            fail(ErrorCode::InvalidStateGraph, assembly_id + ": base part '" + base_part +
                                                   "' not declared");
        for (std::size_t i = 0; i < states.size(); ++i) {
            const auto& s = states[i];
            if (s.state_id != static_cast<int>(i))
                fail(ErrorCode::InvalidStateGraph,
                     assembly_id + ": state ids must be dense 0..N-1");
            if (!s.member_parts.count(base_part))
                fail(ErrorCode::InvalidStateGraph, assembly_id + ": state " +
                                                       std::to_string(s.state_id) +
                                                       " does not include the base part");
            for (const auto& m : s.member_parts) {
                if (!find_part(m))
                    fail(ErrorCode::InvalidStateGraph,
                         assembly_id + ": state " + std::to_string(s.state_id) +
                             " references undeclared part '" + m + "'");
                if (!s.relative_poses.count(m))
                    fail(ErrorCode::InvalidStateGraph,
                         assembly_id + ": state " + std::to_string(s.state_id) +
                             " missing relative pose for '" + m + "'");
            }
        }
        if (neighbors.size() != states.size())
            fail(ErrorCode::InvalidStateGraph, assembly_id + ": neighbor map not built");
        for (std::size_t i = 0; i < neighbors.size(); ++i)
            for (int n : neighbors[i]) {
                bool back = false;
                for (int m : neighbors[n]) back |= (m == static_cast<int>(i));
                if (!back)
                    fail(ErrorCode::InvalidStateGraph, assembly_id + ": neighbor map asymmetric");
            }
    }
};

struct StateDistribution {
    std::vector<double> p;

    static StateDistribution uniform(int n) {
        StateDistribution d;
        d.p.assign(n, 1.0 / n);
        return d;
    }
    static StateDistribution one_hot(int n, int idx) {
        StateDistribution d;
        d.p.assign(n, 0.0);
        d.p.at(idx) = 1.0;
        return d;
    }

    int size() const { return static_cast<int>(p.size()); }

    double sum() const {
        double s = 0;
        for (double v : p) s += v;
        return s;
    }

    void normalize() {
        const double s = sum();
        if (!(s > 0)) fail(ErrorCode::InvalidArgument, "cannot normalize zero distribution");
        for (double& v : p) v /= s;
    }

    // Lowest index wins ties.
    int argmax() const {
        int best = 0;
        for (int i = 1; i < size(); ++i)
            if (p[i] > p[best]) best = i;
        return best;
    }
};

// Pose of b expressed in a's frame.
inline RigidTransform relative_pose(const RigidTransform& pose_a, const RigidTransform& pose_b) {
    return compose(invert(pose_a), pose_b);
}

inline const std::vector<int>& neighbor_states(int state_id, const AssemblyGraph& graph) {
    if (state_id < 0 || state_id >= graph.state_count())
        fail(ErrorCode::InvalidArgument, "unknown state id " + std::to_string(state_id));
    return graph.neighbors[state_id];
}

struct StateDetectConfig {
    double tol_t = 0.05;        // m; residuals are clamped here (flat tail beyond)
    double tol_r = 25.0;        // deg
    double sigma_t = 0.010;     // m
    double sigma_r = 5.0;       // deg
    double loose_penalty = 0.05;  // factor for missing or unexplained parts

    void validate() const {
        if (!(tol_t > 0) || !(tol_r > 0) || !(sigma_t > 0) || !(sigma_r > 0))
            fail(ErrorCode::InvalidArgument, "state detection tolerances must be positive");
        if (!(loose_penalty > 0) || loose_penalty >= 1)
            fail(ErrorCode::InvalidArgument, "loose_penalty must be in (0,1)");
    }
};

struct StateDetectResult {
    StateDistribution distribution;
    bool base_observed = false;
};

namespace assembly_detail {

// Rotation residual honoring the part's discrete symmetry group.
inline double symmetric_rotation_residual(const Eigen::Matrix3d& observed,
                                          const Eigen::Matrix3d& expected,
                                          const PartModel* part) {
    double best = rotation_angle_deg(observed, expected);
    if (part)
        for (const auto& sym : part->symmetries)
            best = std::min(best, rotation_angle_deg(observed, expected * sym));
    return best;
}

}  // namespace assembly_detail

// Score every assembly state against the observed part poses. Each state is a
// hypothesis about which parts are rigidly attached to the base and where;
// parts observed at the expected relative pose multiply in a Gaussian kernel
// factor, while parts the hypothesis cannot explain (expected but unseen, or
// seen but not expected) multiply in a flat penalty. Scores normalize into a
// distribution.
inline StateDetectResult detect_state_from_poses(
    const std::map<std::string, RigidTransform>& observed, const AssemblyGraph& graph,
    const StateDetectConfig& cfg = {}) {
    cfg.validate();
    const int n = graph.state_count();
    StateDetectResult result;
    if (!observed.count(graph.base_part)) {
        result.distribution = StateDistribution::uniform(n);
        result.base_observed = false;
        return result;
    }
    result.base_observed = true;

    const RigidTransform base_inv = invert(observed.at(graph.base_part));
    std::map<std::string, RigidTransform> rel_observed;
    for (const auto& [part, pose] : observed) {
        if (part == graph.base_part) continue;
        rel_observed[part] = compose(base_inv, pose);
    }

    result.distribution.p.assign(n, 0.0);
    for (const auto& state : graph.states) {
        double score = 1.0;
        for (const auto& [part, rel] : rel_observed) {
            if (state.member_parts.count(part)) {
                const auto& expected = state.relative_poses.at(part);
                const double e_t =
                    std::min((rel.translation - expected.translation).norm(), cfg.tol_t);
                const double e_r = std::min(assembly_detail::symmetric_rotation_residual(
                                                rel.rotation, expected.rotation,
                                                graph.find_part(part)),
                                            cfg.tol_r);
                const double nt = e_t / cfg.sigma_t;
                const double nr = e_r / cfg.sigma_r;
                score *= std::exp(-nt * nt - nr * nr);
            } else {
                score *= cfg.loose_penalty;  // observed part the state does not expect
            }
        }
        for (const auto& member : state.member_parts) {
            if (member == graph.base_part) continue;
            if (!rel_observed.count(member)) score *= cfg.loose_penalty;  // expected, unseen
        }
        result.distribution.p[state.state_id] = score;
    }
    result.distribution.normalize();
    return result;
}

}  // namespace asmpose
