#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asmpose/dataset.hpp"
#include "asmpose/error.hpp"
#include "asmpose/rng.hpp"

namespace asmpose {

struct OccluderConfig {
    double depth = 0.4;      // meters, must be nearer than the part it covers
    double coverage = 0.5;   // fraction of the covered part's detection box
    std::string over_part;   // empty: the assembly's base part
};

struct NoiseConfig {
    double keypoint_sigma = 0.0;    // pixels
    double keypoint_dropout = 0.0;  // probability per keypoint
    double outlier_rate = 0.0;      // probability per keypoint
    double state_confusion = 0.0;   // per-frame probability of a confused state head
    double depth_noise_sigma = 0.0; // meters
    std::optional<OccluderConfig> occluder;
    std::uint64_t rng_seed = 0;

    void validate() const {
        for (double p : {keypoint_dropout, outlier_rate, state_confusion})
            if (p < 0 || p > 1) fail(ErrorCode::InvalidArgument, "noise probabilities must be in [0,1]");
        if (keypoint_sigma < 0 || depth_noise_sigma < 0)
            fail(ErrorCode::InvalidArgument, "noise sigmas must be >= 0");
        if (occluder && (!(occluder->depth > 0) || occluder->coverage < 0 || occluder->coverage > 1))
            fail(ErrorCode::InvalidArgument, "occluder needs depth > 0 and coverage in [0,1]");
    }
};

inline NoiseConfig load_noise_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open noise config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    NoiseConfig cfg;
    cfg.keypoint_sigma = j.value("keypoint_sigma", 0.0);
    cfg.keypoint_dropout = j.value("keypoint_dropout", 0.0);
    cfg.outlier_rate = j.value("outlier_rate", 0.0);
    cfg.state_confusion = j.value("state_confusion", 0.0);
    cfg.depth_noise_sigma = j.value("depth_noise_sigma", 0.0);
    cfg.rng_seed = j.value("rng_seed", 0ULL);
    if (j.contains("occluder") && !j["occluder"].is_null()) {
        OccluderConfig occ;
        occ.depth = j["occluder"].value("depth", 0.4);
        occ.coverage = j["occluder"].value("coverage", 0.5);
        occ.over_part = j["occluder"].value("over_part", "");
        cfg.occluder = occ;
    }
    cfg.validate();
    return cfg;
}

struct TimelineSegment {
    int state_id = 0;
    int frame_count = 0;
};

struct ScenarioScript {
    std::string assembly_id;
    CameraIntrinsics camera;
    RigidTransform base_pose;
    std::map<std::string, RigidTransform> scatter_poses;  // where loose parts rest
    std::vector<TimelineSegment> timeline;

    long total_frames() const {
        long n = 0;
        for (const auto& seg : timeline) n += seg.frame_count;
        return n;
    }

    // Regular states must progress stepwise along the chain; error states may
    // appear anywhere in between.
    void validate(const AssemblyGraph& graph) const {
        camera.validate();
        if (timeline.empty()) fail(ErrorCode::InvalidArgument, "script timeline is empty");
        int prev_regular = -1;
        for (const auto& seg : timeline) {
            if (seg.frame_count < 1) fail(ErrorCode::InvalidArgument, "segment frame_count must be >= 1");
            if (seg.state_id < 0 || seg.state_id >= graph.state_count())
                fail(ErrorCode::InvalidArgument,
                     "script references unknown state " + std::to_string(seg.state_id));
            const auto& state = graph.states[seg.state_id];
            if (!state.is_error_state) {
                if (prev_regular >= 0 && std::abs(seg.state_id - prev_regular) > 1)
                    fail(ErrorCode::InvalidArgument,
                         "state " + std::to_string(seg.state_id) + " not reachable from " +
                             std::to_string(prev_regular));
                prev_regular = seg.state_id;
            }
        }
        for (const auto& part : graph.parts) {
            if (part.part_id == graph.base_part) continue;
            if (!scatter_poses.count(part.part_id))
                fail(ErrorCode::InvalidArgument,
                     "script missing scatter pose for part '" + part.part_id + "'");
        }
        if (!(base_pose.translation.z() > 0))
            fail(ErrorCode::InvalidArgument, "base pose must sit in front of the camera");
    }
};

inline ScenarioScript load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open script " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    ScenarioScript script;
    script.assembly_id = j.value("assembly", "");
    if (script.assembly_id.empty())
        fail(ErrorCode::SchemaViolation, path.string() + ": missing 'assembly'");
    script.camera = dataset_detail::intrinsics_from_json(
        j.value("camera", nlohmann::json::object()), path.string());
    if (j.contains("base_pose"))
        script.base_pose = dataset_detail::pose_from_json(j["base_pose"], path.string());
    if (j.contains("scatter_poses"))
        for (const auto& [pid, jpose] : j["scatter_poses"].items())
            script.scatter_poses[pid] = dataset_detail::pose_from_json(jpose, path.string());
    for (const auto& seg : j.value("timeline", nlohmann::json::array()))
        script.timeline.push_back({seg.value("state", -1), seg.value("frames", 0)});
    return script;
}

inline void save_script(const std::filesystem::path& path, const ScenarioScript& script) {
    nlohmann::json j;
    j["assembly"] = script.assembly_id;
    j["camera"] = dataset_detail::intrinsics_to_json(script.camera);
    j["base_pose"] = dataset_detail::pose_to_json(script.base_pose);
    nlohmann::json scatter = nlohmann::json::object();
    for (const auto& [pid, pose] : script.scatter_poses)
        scatter[pid] = dataset_detail::pose_to_json(pose);
    j["scatter_poses"] = scatter;
    nlohmann::json timeline = nlohmann::json::array();
    for (const auto& seg : script.timeline)
        timeline.push_back({{"state", seg.state_id}, {"frames", seg.frame_count}});
    j["timeline"] = timeline;
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write script " + path.string());
    out << j.dump(2) << "\n";
}

struct SceneItem {
    const PartModel* part = nullptr;
    RigidTransform pose;  // camera frame
};

struct Scene {
    int state_id = 0;
    std::vector<SceneItem> items;  // in part declaration order
    std::map<std::string, RigidTransform> poses;
};

// Resolve the scene for a frame: state members ride on the base part, loose
// parts rest at their scripted scatter poses.
inline Scene scene_at(const ScenarioScript& script, const AssemblyGraph& graph, long frame) {
    long remaining = frame;
    const TimelineSegment* segment = nullptr;
    for (const auto& seg : script.timeline) {
        if (remaining < seg.frame_count) {
            segment = &seg;
            break;
        }
        remaining -= seg.frame_count;
    }
    if (!segment) fail(ErrorCode::InvalidArgument, "frame beyond script timeline");

    const auto& state = graph.states[segment->state_id];
    Scene scene;
    scene.state_id = segment->state_id;
    for (const auto& part : graph.parts) {
        RigidTransform pose;
        if (state.member_parts.count(part.part_id))
            pose = compose(script.base_pose, state.relative_poses.at(part.part_id));
        else
            pose = compose(script.base_pose, script.scatter_poses.at(part.part_id));
        scene.items.push_back({&part, pose});
        scene.poses[part.part_id] = pose;
    }
    return scene;
}

// ---- depth rendering ----

// Plain z-buffer triangle rasterization; background stays 0 (hole).
inline DepthImage render_depth(std::span<const SceneItem> scene, const CameraIntrinsics& cam) {
    cam.validate();
    DepthImage depth = DepthImage::zeros(cam.width, cam.height);
    std::vector<Eigen::Vector3d> cam_pts;
    std::vector<Eigen::Vector2d> px;
    for (const auto& item : scene) {
        const auto& mesh = item.part->mesh;
        cam_pts.clear();
        px.clear();
        cam_pts.reserve(mesh.vertices.size());
        px.reserve(mesh.vertices.size());
        bool all_in_front = true;
        for (const auto& v : mesh.vertices) {
            const Eigen::Vector3d p = item.pose.apply(v);
            cam_pts.push_back(p);
            if (p.z() > 1e-9) {
                px.push_back(project_point(p, cam));
            } else {
                px.push_back({0, 0});
                all_in_front = false;
            }
        }
        for (const auto& f : mesh.faces) {
            const auto& a = cam_pts[f[0]];
            const auto& b = cam_pts[f[1]];
            const auto& c = cam_pts[f[2]];
            if (!all_in_front && (a.z() <= 1e-9 || b.z() <= 1e-9 || c.z() <= 1e-9)) continue;
            const auto& pa = px[f[0]];
            const auto& pb = px[f[1]];
            const auto& pc = px[f[2]];
            const double area2 =
                (pb.x() - pa.x()) * (pc.y() - pa.y()) - (pb.y() - pa.y()) * (pc.x() - pa.x());
            if (std::abs(area2) < 1e-12) continue;  // edge-on sliver

            const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pc.x()}))));
            const int u1 = std::min(cam.width - 1,
                                    static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pc.x()}))));
            const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pc.y()}))));
            const int v1 = std::min(cam.height - 1,
                                    static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pc.y()}))));
            const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();
            for (int v = v0; v <= v1; ++v) {
                for (int u = u0; u <= u1; ++u) {
                    const double w0 = (pc.x() - pb.x()) * (v - pb.y()) - (pc.y() - pb.y()) * (u - pb.x());
                    const double w1 = (pa.x() - pc.x()) * (v - pc.y()) - (pa.y() - pc.y()) * (u - pc.x());
                    const double w2 = (pb.x() - pa.x()) * (v - pa.y()) - (pb.y() - pa.y()) * (u - pa.x());
                    const bool inside = (area2 > 0) ? (w0 >= 0 && w1 >= 0 && w2 >= 0)
                                                    : (w0 <= 0 && w1 <= 0 && w2 <= 0);
                    if (!inside) continue;
                    // 1/z is affine in screen space, so this interpolation is
                    // perspective-correct
                    const double inv_z = (w0 * iza + w1 * izb + w2 * izc) / area2;
                    if (!(inv_z > 0)) continue;
                    const double z = 1.0 / inv_z;
                    double& cell = depth.at(u, v);
                    if (cell == 0.0 || z < cell) cell = z;
                }
            }
        }
    }
    return depth;
}

// Tight axis-aligned box around the projected mesh, clipped to the image.
// nullopt when the part projects entirely off screen.
inline std::optional<BoundingBox> projected_bbox(const PartModel& part, const RigidTransform& pose,
                                                 const CameraIntrinsics& cam) {
    double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
    double u1 = -u0, v1 = -u0;
    for (const auto& v : part.mesh.vertices) {
        const Eigen::Vector3d p = pose.apply(v);
        if (!(p.z() > 1e-9)) continue;
        const Eigen::Vector2d px = project_point(p, cam);
        u0 = std::min(u0, px.x());
        u1 = std::max(u1, px.x());
        v0 = std::min(v0, px.y());
        v1 = std::max(v1, px.y());
    }
    u0 = std::max(u0, 0.0);
    v0 = std::max(v0, 0.0);
    u1 = std::min(u1, static_cast<double>(cam.width - 1));
    v1 = std::min(v1, static_cast<double>(cam.height - 1));
    if (!(u1 > u0) || !(v1 > v0)) return std::nullopt;
    return BoundingBox{u0, v0, u1 - u0, v1 - v0};
}

inline void apply_depth_noise(DepthImage& depth, double sigma, Rng& rng) {
    if (sigma <= 0) return;
    for (double& d : depth.data)
        if (d > 0) d = std::max(0.0, d + rng.normal(sigma));
}

// Plant a flat occluder patch over the center of a detection box. The patch
// wins wherever it is nearer than the existing surface (and over holes).
inline void apply_occluder(DepthImage& depth, const BoundingBox& bbox, const OccluderConfig& occ) {
    const double scale = std::sqrt(occ.coverage);
    const double w = bbox.w * scale, h = bbox.h * scale;
    const double cx = bbox.x + bbox.w / 2, cy = bbox.y + bbox.h / 2;
    const int u0 = static_cast<int>(std::lround(cx - w / 2));
    const int u1 = static_cast<int>(std::lround(cx + w / 2));
    const int v0 = static_cast<int>(std::lround(cy - h / 2));
    const int v1 = static_cast<int>(std::lround(cy + h / 2));
    for (int v = v0; v <= v1; ++v)
        for (int u = u0; u <= u1; ++u) {
            if (!depth.in_bounds(u, v)) continue;
            double& cell = depth.at(u, v);
            cell = (cell == 0.0) ? occ.depth : std::min(cell, occ.depth);
        }
}

// ---- backbone surrogate ----

// Per visible part: box from the projected mesh, keypoints from the projected
// model keypoints plus Gaussian noise, dropout (confidence 0) and in-box
// outlier replacement, and a per-class score vector that is one-hot on the
// scene's state unless this frame drew a confusion event.
inline DetectionFrame synthesize_detections(const Scene& scene, const AssemblyGraph& graph,
                                            const CameraIntrinsics& cam, const NoiseConfig& noise,
                                            long frame_index) {
    noise.validate();
    Rng rng = Rng(noise.rng_seed).fork(2 * frame_index + 1);
    DetectionFrame frame;
    frame.frame_index = frame_index;

    const int n_states = graph.state_count();
    const bool confused = rng.uniform() < noise.state_confusion;
    std::vector<double> scores(n_states, 0.0);
    if (confused) {
        std::fill(scores.begin(), scores.end(), 1.0 / n_states);
    } else {
        scores[scene.state_id] = 1.0;
    }

    for (const auto& item : scene.items) {
        const auto bbox = projected_bbox(*item.part, item.pose, cam);
        if (!bbox) continue;  // off screen: not detected
        DetectionInstance inst;
        inst.part = item.part->part_id;
        inst.bbox = *bbox;
        inst.class_scores = scores;
        inst.class_id = static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                         scores.begin());
        inst.confidence = *std::max_element(scores.begin(), scores.end());
        for (const auto& kp : item.part->keypoints_3d.points) {
            const Eigen::Vector3d p = item.pose.apply(kp);
            KeypointObs obs;
            if (p.z() > 1e-9) {
                const Eigen::Vector2d px = project_point(p, cam);
                obs.u = px.x() + rng.normal(noise.keypoint_sigma);
                obs.v = px.y() + rng.normal(noise.keypoint_sigma);
                obs.confidence = 0.95;
            }
            if (rng.uniform() < noise.keypoint_dropout) {
                obs.confidence = 0.0;
            } else if (rng.uniform() < noise.outlier_rate) {
                obs.u = bbox->x + rng.uniform() * bbox->w;
                obs.v = bbox->y + rng.uniform() * bbox->h;
            }
            inst.keypoints.push_back(obs);
        }
        frame.instances.push_back(std::move(inst));
    }
    return frame;
}

// ---- scenario materialization ----

struct ScenarioOutput {
    std::filesystem::path manifest_path;
    std::filesystem::path detections_path;
    SequenceManifest manifest;
    DetectionFile detections;
};

// Renders the whole scripted sequence to disk in the dataset formats:
// depth/######.png, manifest.jsonl (with ground truth), detections.jsonl.
// Per-frame RNG streams make the output independent of processing order and
// bit-identical for a fixed (script, noise, seed).
inline ScenarioOutput run_scenario(const ScenarioScript& script, const AssemblyGraph& graph,
                                   const NoiseConfig& noise, const std::filesystem::path& out_dir) {
    script.validate(graph);
    noise.validate();
    std::filesystem::create_directories(out_dir / "depth");

    ScenarioOutput out;
    out.manifest.assembly_id = graph.assembly_id;
    out.manifest.root = out_dir;

    const long total = script.total_frames();
    for (long f = 0; f < total; ++f) {
        const Scene scene = scene_at(script, graph, f);
        DepthImage depth = render_depth(scene.items, script.camera);
        Rng depth_rng = Rng(noise.rng_seed).fork(2 * f);
        apply_depth_noise(depth, noise.depth_noise_sigma, depth_rng);
        if (noise.occluder) {
            const std::string target =
                noise.occluder->over_part.empty() ? graph.base_part : noise.occluder->over_part;
            const auto it = scene.poses.find(target);
            if (it == scene.poses.end())
                fail(ErrorCode::InvalidArgument, "occluder over unknown part '" + target + "'");
            if (const auto bbox = projected_bbox(*graph.find_part(target), it->second, script.camera))
                apply_occluder(depth, *bbox, *noise.occluder);
        }

        char name[32];
        std::snprintf(name, sizeof(name), "depth/%06ld.png", f);
        write_depth_png(out_dir / name, depth);

        FrameRecord rec;
        rec.frame_index = f;
        rec.depth_path = name;
        rec.intrinsics = script.camera;
        rec.gt_state = scene.state_id;
        rec.gt_poses = scene.poses;
        out.manifest.frames.push_back(std::move(rec));

        out.detections.frames.push_back(
            synthesize_detections(scene, graph, script.camera, noise, f));
    }

    out.manifest_path = out_dir / "manifest.jsonl";
    out.detections_path = out_dir / "detections.jsonl";
    write_manifest(out.manifest_path, out.manifest);
    write_detections(out.detections_path, out.detections);
    return out;
}

}  // namespace asmpose
