#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "asmpose/dataset.hpp"
#include "asmpose/fusion.hpp"
#include "asmpose/pnp.hpp"
#include "asmpose/refine.hpp"

namespace asmpose {

struct PipelineConfig {
    std::filesystem::path registry_path;
    FusionWeights weights;
    RansacConfig ransac;
    RefineConfig refine;
    StateDetectConfig state_detect;
    std::string backbone_tag = "sim";     // metadata only
    std::filesystem::path output_dir = "out";

    void validate() const {
        weights.validate();
        ransac.validate();
        refine.validate();
        state_detect.validate();
        if (registry_path.empty()) fail(ErrorCode::InvalidArgument, "config needs a registry path");
    }
};

// Config file next to its referenced paths; ASMPOSE_OUTPUT_DIR overrides the
// output directory (output paths only).
inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    PipelineConfig cfg;
    const auto root = path.parent_path();
    cfg.registry_path = root / j.value("registry", "registry.json");
    if (!std::filesystem::exists(cfg.registry_path))
        fail(ErrorCode::InvalidArgument,
             "config references missing registry " + cfg.registry_path.string());
    cfg.backbone_tag = j.value("backbone", "sim");
    cfg.output_dir = j.value("output_dir", "out");
    if (const char* env = std::getenv("ASMPOSE_OUTPUT_DIR")) cfg.output_dir = env;
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        cfg.weights = {w.value("w_dl", 1.0), w.value("w_p", 1.0), w.value("w_f", 0.5),
                       w.value("w_f1", 0.25)};
    }
    if (j.contains("ransac")) {
        const auto& r = j["ransac"];
        cfg.ransac.max_iterations = r.value("max_iterations", 200);
        cfg.ransac.inlier_threshold = r.value("inlier_threshold", 6.0);
        cfg.ransac.min_inliers = r.value("min_inliers", 6);
        cfg.ransac.confidence_target = r.value("confidence_target", 0.99);
        cfg.ransac.rng_seed = r.value("rng_seed", 0ULL);
    }
    if (j.contains("refine")) {
        const auto& r = j["refine"];
        cfg.refine.surface_sample_count = r.value("surface_sample_count", 500);
        cfg.refine.near_fraction = r.value("near_fraction", 0.3);
        cfg.refine.weight_scale = r.value("weight_scale", 0.01);
        cfg.refine.min_valid_points = r.value("min_valid_points", 10);
    }
    if (j.contains("state_detect")) {
        const auto& s = j["state_detect"];
        cfg.state_detect.tol_t = s.value("tol_t", 0.05);
        cfg.state_detect.tol_r = s.value("tol_r", 25.0);
        cfg.state_detect.sigma_t = s.value("sigma_t", 0.01);
        cfg.state_detect.sigma_r = s.value("sigma_r", 5.0);
        cfg.state_detect.loose_penalty = s.value("loose_penalty", 0.05);
    }
    cfg.validate();
    return cfg;
}

struct RunResult {
    std::vector<FrameEstimate> estimates;
    std::vector<double> per_frame_ms;  // wall clock, non-deterministic diagnostics
    long pose_failures = 0;            // per-part solver failures, recorded in notes
};

// One sequence through the full pipeline: per detected part RANSAC PnP from
// its 17 keypoints, depth-based translation refinement, pose-based state
// scoring against the graph, and temporal late fusion. Frame-level problems
// are recorded in the estimate notes and never abort the sequence.
inline RunResult run_sequence(const SequenceManifest& manifest, const DetectionFile& detections,
                              const AssemblyGraph& graph, const PipelineConfig& cfg) {
    cfg.validate();
    const int n_states = graph.state_count();

    std::map<long, const DetectionFrame*> det_by_frame;
    for (const auto& frame : detections.frames) {
        for (const auto& inst : frame.instances) {
            if (!graph.find_part(inst.part))
                fail(ErrorCode::SchemaViolation,
                     "detections reference unknown part '" + inst.part + "'");
            if (static_cast<int>(inst.class_scores.size()) != n_states)
                fail(ErrorCode::SchemaViolation,
                     "class score vector length " + std::to_string(inst.class_scores.size()) +
                         " does not match " + std::to_string(n_states) + " states");
        }
        det_by_frame[frame.frame_index] = &frame;
    }

    RunResult result;
    FusionState fusion_state = FusionState::initial(n_states);

    for (const auto& rec : manifest.frames) {
        const auto start = std::chrono::steady_clock::now();
        FrameEstimate est;
        est.frame_index = rec.frame_index;

        const DetectionFrame* det = nullptr;
        if (const auto it = det_by_frame.find(rec.frame_index); it != det_by_frame.end())
            det = it->second;

        DepthImage depth;
        bool depth_ok = false;
        if (det && !det->instances.empty()) {
            try {
                depth = load_frame_depth(manifest, rec);
                depth_ok = true;
            } catch (const Error& e) {
                est.notes.push_back(std::string("depth unavailable: ") + e.what());
            }
        }

        const DetectionInstance* best_instance = nullptr;
        if (det) {
            for (const auto& inst : det->instances) {
                if (!best_instance || inst.confidence > best_instance->confidence)
                    best_instance = &inst;

                std::vector<Correspondence> corrs;
                corrs.reserve(inst.keypoints.size());
                const PartModel* part = graph.find_part(inst.part);
                for (std::size_t k = 0; k < inst.keypoints.size(); ++k)
                    corrs.push_back({part->keypoints_3d.points[k],
                                     {inst.keypoints[k].u, inst.keypoints[k].v},
                                     inst.keypoints[k].confidence});
                try {
                    const auto pnp = solve_pnp_ransac(corrs, rec.intrinsics, cfg.ransac);
                    RigidTransform pose = pnp.pose;
                    if (depth_ok) {
                        const auto refined = refine_translation(
                            pose, part->surface_points, inst.bbox, depth, rec.intrinsics,
                            cfg.refine);
                        pose = refined.pose;
                        if (!refined.applied)
                            est.notes.push_back(inst.part + ": refinement skipped (" +
                                                std::to_string(refined.valid_points) +
                                                " valid depth samples)");
                    }
                    est.poses[inst.part] = pose;
                } catch (const Error& e) {
                    ++result.pose_failures;
                    est.notes.push_back(inst.part + ": " + e.what());
                }
            }
        }

        // detector state evidence: highest-confidence instance, renormalized
        StateDistribution sp_dl;
        sp_dl.p.assign(n_states, 0.0);
        if (best_instance && best_instance->class_scores.size() == sp_dl.p.size()) {
            double sum = 0;
            for (double v : best_instance->class_scores) sum += v;
            if (sum > 0)
                for (int i = 0; i < n_states; ++i) sp_dl.p[i] = best_instance->class_scores[i] / sum;
        }

        // pose state evidence; zeros when the base part (the reference) is
        // missing, so fusion falls back to detector + history
        StateDistribution sp_p;
        sp_p.p.assign(n_states, 0.0);
        if (est.poses.count(graph.base_part)) {
            const auto detect = detect_state_from_poses(est.poses, graph, cfg.state_detect);
            if (detect.base_observed) {
                sp_p = detect.distribution;
                est.pose_evidence = true;
            }
        } else if (!est.poses.empty()) {
            est.notes.push_back("base part unobserved; pose evidence dropped");
        }

        const auto fused = pose2state(sp_dl, sp_p, fusion_state, graph, cfg.weights);
        est.state_dist = fused.distribution;
        est.state = fused.chosen_state;
        fusion_state = advance(fusion_state, fused);

        result.per_frame_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count());
        result.estimates.push_back(std::move(est));
    }
    return result;
}

// Score a run against ground truth. Undetected parts count as add = +inf
// (threshold miss) and stay out of the translation/rotation means; they are
// reported as the detection miss rate instead.
inline SequenceReport evaluate_sequence(const std::vector<FrameEstimate>& estimates,
                                        const SequenceManifest& manifest,
                                        const AssemblyGraph& graph,
                                        const std::vector<double>& per_frame_ms = {},
                                        double add_threshold_mm = 100.0) {
    if (estimates.size() != manifest.frames.size())
        fail(ErrorCode::InvalidArgument,
             "estimate/ground-truth length mismatch: " + std::to_string(estimates.size()) +
                 " vs " + std::to_string(manifest.frames.size()));
    for (std::size_t i = 0; i < estimates.size(); ++i)
        if (estimates[i].frame_index != manifest.frames[i].frame_index)
            fail(ErrorCode::InvalidArgument,
                 "estimate/ground-truth misalignment at frame index " +
                     std::to_string(manifest.frames[i].frame_index));

    SequenceReport report;
    report.assembly_id = manifest.assembly_id.empty() ? graph.assembly_id : manifest.assembly_id;
    report.frame_count = static_cast<long>(estimates.size());

    std::map<std::string, std::vector<PoseErrorRecord>> per_part;
    std::vector<int> pred_states, gt_states;

    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const auto& est = estimates[i];
        const auto& rec = manifest.frames[i];
        pred_states.push_back(est.state);
        gt_states.push_back(rec.gt_state);

        for (const auto& [part_id, gt_pose] : rec.gt_poses) {
            const PartModel* part = graph.find_part(part_id);
            if (!part)
                fail(ErrorCode::InvalidArgument,
                     "ground truth references unknown part '" + part_id + "'");
            PoseErrorRecord record;
            record.part_id = part_id;
            const auto it = est.poses.find(part_id);
            if (it == est.poses.end()) {
                record.detected = false;
                record.add_mm = std::numeric_limits<double>::infinity();
            } else {
                const auto [et, er] = pose_errors(it->second, gt_pose);
                record.e_trans_mm = et;
                record.e_rot_deg = er;
                record.add_mm =
                    add_error(it->second, gt_pose, part->surface_points, part->symmetric);
            }
            record.add_within_threshold = record.add_mm < add_threshold_mm;
            per_part[part_id].push_back(record);
        }
    }

    double trans_sum = 0, rot_sum = 0;
    long detected_total = 0, records_total = 0, add_hits = 0;
    for (auto& [part_id, records] : per_part) {
        PartSummary summary;
        summary.part_id = part_id;
        summary.frames = static_cast<long>(records.size());
        double pt = 0, pr = 0;
        long hits = 0;
        for (const auto& r : records) {
            if (r.detected) {
                ++summary.detected;
                pt += r.e_trans_mm;
                pr += r.e_rot_deg;
            }
            if (r.add_within_threshold) ++hits;
        }
        summary.mean_e_trans_mm = summary.detected ? pt / summary.detected : 0.0;
        summary.mean_e_rot_deg = summary.detected ? pr / summary.detected : 0.0;
        summary.add_accuracy_pct = add_accuracy(records, add_threshold_mm);
        summary.miss_rate_pct =
            100.0 * static_cast<double>(summary.frames - summary.detected) / summary.frames;
        report.per_part.push_back(summary);

        trans_sum += pt;
        rot_sum += pr;
        detected_total += summary.detected;
        records_total += summary.frames;
        add_hits += hits;
    }
    report.mean_e_trans_mm = detected_total ? trans_sum / detected_total : 0.0;
    report.mean_e_rot_deg = detected_total ? rot_sum / detected_total : 0.0;
    report.add_accuracy_pct =
        records_total ? 100.0 * static_cast<double>(add_hits) / records_total : 0.0;
    report.detection_miss_rate_pct =
        records_total ? 100.0 * static_cast<double>(records_total - detected_total) / records_total
                      : 0.0;
    report.state_scores = state_f1(pred_states, gt_states, graph.state_count());
    if (!per_frame_ms.empty()) {
        double sum = 0;
        for (double v : per_frame_ms) sum += v;
        report.mean_runtime_ms = sum / static_cast<double>(per_frame_ms.size());
    }
    return report;
}

}  // namespace asmpose
