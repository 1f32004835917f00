#pragma once

#include <string>
#include <vector>

#include "asmpose/assembly.hpp"
#include "asmpose/error.hpp"

namespace asmpose {

// Late-fusion weights: detector scores, pose-based scores, previous final
// distribution, and the neighbor-smoothed previous distribution.
struct FusionWeights {
    double w_dl = 1.0;
    double w_p = 1.0;
    double w_f = 0.5;
    double w_f1 = 0.25;

    double sum() const { return w_dl + w_p + w_f + w_f1; }

    void validate() const {
        if (w_dl < 0 || w_p < 0 || w_f < 0 || w_f1 < 0)
            fail(ErrorCode::InvalidArgument, "fusion weights must be >= 0");
        if (!(sum() > 0)) fail(ErrorCode::InvalidArgument, "fusion weights must not all be zero");
    }
};

struct FusionState {
    StateDistribution previous_final;
    int previous_argmax = 0;
    long frame_index = 0;

    // First-frame prior: nothing is known yet.
    static FusionState initial(int state_count) {
        FusionState s;
        s.previous_final = StateDistribution::uniform(state_count);
        return s;
    }
};

namespace fusion_detail {

inline void check_lengths(int a, int b, const char* what) {
    if (a != b)
        fail(ErrorCode::InvalidArgument,
             std::string(what) + ": distribution lengths differ (" + std::to_string(a) + " vs " +
                 std::to_string(b) + ")");
}

inline void check_nonnegative(const StateDistribution& d, const char* what) {
    for (double v : d.p)
        if (!(v >= 0) || !std::isfinite(v))
            fail(ErrorCode::InvalidArgument, std::string(what) + ": probabilities must be >= 0");
}

}  // namespace fusion_detail

// Current-frame evidence: w_dl * P_dl + w_p * P_pose, elementwise, unnormalized.
inline std::vector<double> fuse_dl_pose(const StateDistribution& sp_dl,
                                        const StateDistribution& sp_p, const FusionWeights& w) {
    w.validate();
    fusion_detail::check_lengths(sp_dl.size(), sp_p.size(), "fuse_dl_pose");
    fusion_detail::check_nonnegative(sp_dl, "fuse_dl_pose");
    fusion_detail::check_nonnegative(sp_p, "fuse_dl_pose");
    std::vector<double> scores(sp_dl.size());
    for (int i = 0; i < sp_dl.size(); ++i) scores[i] = w.w_dl * sp_dl.p[i] + w.w_p * sp_p.p[i];
    return scores;
}

// History evidence: w_f * P_prev(s) + w_f1 * mean over neighbors of P_prev.
// Boundary states average over their single neighbor; states without
// neighbors (error states) receive no neighbor mass.
inline std::vector<double> temporal_term(const FusionState& prev, const AssemblyGraph& graph,
                                         const FusionWeights& w) {
    w.validate();
    fusion_detail::check_lengths(prev.previous_final.size(), graph.state_count(), "temporal_term");
    fusion_detail::check_nonnegative(prev.previous_final, "temporal_term");
    std::vector<double> scores(graph.state_count(), 0.0);
    for (int s = 0; s < graph.state_count(); ++s) {
        double neighbor_mean = 0.0;
        const auto& ns = graph.neighbors[s];
        if (!ns.empty()) {
            for (int n : ns) neighbor_mean += prev.previous_final.p[n];
            neighbor_mean /= static_cast<double>(ns.size());
        }
        scores[s] = w.w_f * prev.previous_final.p[s] + w.w_f1 * neighbor_mean;
    }
    return scores;
}

struct FusionFrameResult {
    StateDistribution distribution;
    int chosen_state = 0;
    bool degenerate = false;  // every input was zero; distribution fell back to uniform
};

// Final per-frame fusion: current-frame and history scores summed, divided by
// the weight total, renormalized to a distribution. The printed denominator
// alone does not normalize (the temporal term's mass varies), so an explicit
// renormalization keeps downstream consumers on the simplex; the argmax is
// unaffected. Ties choose the lowest state id.
inline FusionFrameResult pose2state(const StateDistribution& sp_dl, const StateDistribution& sp_p,
                                    const FusionState& prev, const AssemblyGraph& graph,
                                    const FusionWeights& w) {
    fusion_detail::check_lengths(sp_dl.size(), graph.state_count(), "pose2state");
    const auto current = fuse_dl_pose(sp_dl, sp_p, w);
    const auto history = temporal_term(prev, graph, w);

    FusionFrameResult result;
    result.distribution.p.resize(current.size());
    const double denom = w.sum();
    double total = 0;
    for (std::size_t i = 0; i < current.size(); ++i) {
        result.distribution.p[i] = (current[i] + history[i]) / denom;
        total += result.distribution.p[i];
    }
    if (total > 0) {
        result.distribution.normalize();
    } else {
        result.distribution = StateDistribution::uniform(graph.state_count());
        result.degenerate = true;
    }
    result.chosen_state = result.distribution.argmax();
    return result;
}

// Carry a frame's fused output into the next frame's prior.
inline FusionState advance(const FusionState& prev, const FusionFrameResult& frame) {
    FusionState next;
    next.previous_final = frame.distribution;
    next.previous_argmax = frame.chosen_state;
    next.frame_index = prev.frame_index + 1;
    return next;
}

}  // namespace asmpose
