#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asmpose/assembly.hpp"
#include "asmpose/depth_io.hpp"
#include "asmpose/error.hpp"
#include "asmpose/mesh.hpp"
#include "asmpose/metrics.hpp"
#include "asmpose/rng.hpp"
#include "json.hpp"

namespace asmpose {

inline constexpr int kKeypointCount = 17;

namespace dataset_detail {

using nlohmann::json;

inline json pose_to_json(const RigidTransform& t) {
    const Eigen::Matrix4d m = t.matrix();
    json a = json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a.push_back(m(r, c));
    return a;
}

inline RigidTransform pose_from_json(const json& a, const std::string& where) {
    if (!a.is_array() || a.size() != 16)
        fail(ErrorCode::SchemaViolation, where + ": pose must be a 16-number row-major array");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            const auto& v = a[4 * r + c];
            if (!v.is_number()) fail(ErrorCode::SchemaViolation, where + ": pose entry not numeric");
            m(r, c) = v.get<double>();
        }
    RigidTransform t;
    t.rotation = m.topLeftCorner<3, 3>();
    t.translation = m.topRightCorner<3, 1>();
    const double drift = rotation_drift(t.rotation);
    if (drift >= 1e-6)
        fail(ErrorCode::SchemaViolation, where + ": rotation drift " + std::to_string(drift) +
                                             " exceeds 1e-6");
    if (drift > 1e-12) t.rotation = orthonormalized(t.rotation);
    return t;
}

inline json intrinsics_to_json(const CameraIntrinsics& cam) {
    return json{{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx},
                {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

inline CameraIntrinsics intrinsics_from_json(const json& j, const std::string& where) {
    CameraIntrinsics cam;
    try {
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, where + ": bad intrinsics (" + e.what() + ")");
    }
    cam.validate();
    return cam;
}

inline json parse_line(const std::string& line, const std::string& file, long line_no) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation,
             file + ":" + std::to_string(line_no) + ": " + e.what());
    }
}

}  // namespace dataset_detail

// ---- model registry ----

struct RegistryOptions {
    int surface_sample_count = 500;
    int keypoint_count = kKeypointCount;
    int dense_sample_count = 2000;  // pool that FPS draws from
};

struct ModelRegistry {
    std::map<std::string, AssemblyGraph> assemblies;
    std::filesystem::path root;

    const AssemblyGraph& get(const std::string& id) const {
        const auto it = assemblies.find(id);
        if (it == assemblies.end())
            fail(ErrorCode::InvalidArgument, "unknown assembly '" + id + "'");
        return it->second;
    }
};

// Loads and fully validates a registry. Mesh-derived surface points and the
// 17 keypoints are computed here with seeds tied to the part name, so a
// reload always reproduces the same samples.
inline ModelRegistry load_registry(const std::filesystem::path& path,
                                   const RegistryOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open registry " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }

    ModelRegistry registry;
    registry.root = path.parent_path();
    if (!doc.contains("assemblies") || !doc["assemblies"].is_array())
        fail(ErrorCode::SchemaViolation, path.string() + ": missing 'assemblies' array");

    for (const auto& ja : doc["assemblies"]) {
        AssemblyGraph graph;
        graph.assembly_id = ja.value("id", "");
        if (graph.assembly_id.empty())
            fail(ErrorCode::SchemaViolation, path.string() + ": assembly without id");
        graph.base_part = ja.value("base_part", "");

        for (const auto& jp : ja.value("parts", nlohmann::json::array())) {
            PartModel part;
            part.part_id = jp.value("id", "");
            const std::string mesh_rel = jp.value("mesh", "");
            const auto mesh_path = registry.root / mesh_rel;
            if (part.part_id.empty() || mesh_rel.empty())
                fail(ErrorCode::SchemaViolation,
                     graph.assembly_id + ": part entries need 'id' and 'mesh'");
            try {
                part.mesh = load_obj(mesh_path);
            } catch (const Error&) {
                fail(ErrorCode::MissingMesh, graph.assembly_id + "/" + part.part_id +
                                                 ": mesh unreadable at " + mesh_path.string());
            }
            part.symmetric = jp.value("symmetric", false);
            for (const auto& js : jp.value("symmetries", nlohmann::json::array())) {
                if (!js.is_array() || js.size() != 4)
                    fail(ErrorCode::SchemaViolation,
                         part.part_id + ": symmetry must be a quaternion [w,x,y,z]");
                part.symmetries.push_back(
                    from_quaternion(js[0].get<double>(), js[1].get<double>(),
                                    js[2].get<double>(), js[3].get<double>(), {0, 0, 0})
                        .rotation);
            }

            const std::uint64_t seed = fnv1a(graph.assembly_id + "/" + part.part_id);
            const int dense_n = std::max(opts.dense_sample_count, 4 * opts.surface_sample_count);
            const PointCloud3 dense = sample_surface(part.mesh, dense_n, seed);
            for (int idx : farthest_point_sampling(dense, opts.surface_sample_count))
                part.surface_points.points.push_back(dense.points[idx]);
            for (int idx : farthest_point_sampling(part.surface_points, opts.keypoint_count))
                part.keypoints_3d.points.push_back(part.surface_points.points[idx]);
            graph.parts.push_back(std::move(part));
        }

        for (const auto& js : ja.value("states", nlohmann::json::array())) {
            AssemblyState state;
            state.state_id = js.value("id", -1);
            state.name = js.value("name", "");
            state.is_error_state = js.value("error", false);
            for (const auto& m : js.value("members", nlohmann::json::array()))
                state.member_parts.insert(m.get<std::string>());
            if (js.contains("relative_poses"))
                for (const auto& [pid, jpose] : js["relative_poses"].items())
                    state.relative_poses[pid] = dataset_detail::pose_from_json(
                        jpose, graph.assembly_id + " state " + std::to_string(state.state_id));
            graph.states.push_back(std::move(state));
        }

        if (ja.contains("num_states") &&
            ja["num_states"].get<int>() != static_cast<int>(graph.states.size()))
            fail(ErrorCode::InvalidStateGraph,
                 graph.assembly_id + ": declares " + ja["num_states"].dump() + " states but " +
                     std::to_string(graph.states.size()) + " are defined");

        graph.build_neighbors();
        graph.validate();
        registry.assemblies.emplace(graph.assembly_id, std::move(graph));
    }
    return registry;
}

// ---- sequence manifest (depth + ground truth) ----

struct FrameRecord {
    long frame_index = 0;
    std::string depth_path;  // relative to the manifest directory
    CameraIntrinsics intrinsics;
    std::map<std::string, RigidTransform> gt_poses;
    int gt_state = 0;
};

struct SequenceManifest {
    std::string assembly_id;
    std::vector<FrameRecord> frames;
    std::filesystem::path root;
};

inline SequenceManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open manifest " + path.string());
    SequenceManifest manifest;
    manifest.root = path.parent_path();
    std::string line;
    long line_no = 0;
    long last_index = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = dataset_detail::parse_line(line, path.string(), line_no);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (j.value("type", "") == "header") {
            manifest.assembly_id = j.value("assembly", "");
            continue;
        }
        FrameRecord rec;
        if (!j.contains("frame") || !j["frame"].is_number_integer())
            fail(ErrorCode::SchemaViolation, where + ": missing frame index");
        rec.frame_index = j["frame"].get<long>();
        if (rec.frame_index <= last_index)
            fail(ErrorCode::FrameGap, where + ": frame indices must be strictly increasing (" +
                                          std::to_string(rec.frame_index) + " after " +
                                          std::to_string(last_index) + ")");
        last_index = rec.frame_index;
        rec.depth_path = j.value("depth", "");
        if (rec.depth_path.empty()) fail(ErrorCode::SchemaViolation, where + ": missing depth path");
        rec.intrinsics = dataset_detail::intrinsics_from_json(
            j.value("intrinsics", nlohmann::json::object()), where);
        rec.gt_state = j.value("state", 0);
        if (j.contains("poses"))
            for (const auto& [pid, jpose] : j["poses"].items())
                rec.gt_poses[pid] = dataset_detail::pose_from_json(jpose, where);
        manifest.frames.push_back(std::move(rec));
    }
    return manifest;
}

inline void write_manifest(const std::filesystem::path& path, const SequenceManifest& manifest) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write manifest " + path.string());
    nlohmann::json header{{"type", "header"}, {"assembly", manifest.assembly_id},
                          {"frame_count", manifest.frames.size()}};
    out << header.dump() << "\n";
    for (const auto& rec : manifest.frames) {
        nlohmann::json j;
        j["frame"] = rec.frame_index;
        j["depth"] = rec.depth_path;
        j["intrinsics"] = dataset_detail::intrinsics_to_json(rec.intrinsics);
        j["state"] = rec.gt_state;
        nlohmann::json poses = nlohmann::json::object();
        for (const auto& [pid, pose] : rec.gt_poses) poses[pid] = dataset_detail::pose_to_json(pose);
        j["poses"] = poses;
        out << j.dump() << "\n";
    }
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline DepthImage load_frame_depth(const SequenceManifest& manifest, const FrameRecord& rec) {
    return read_depth_png(manifest.root / rec.depth_path);
}

// Single-consumer streaming view over a manifest.
class SequenceReader {
  public:
    explicit SequenceReader(SequenceManifest manifest) : manifest_(std::move(manifest)) {}

    struct LoadedFrame {
        FrameRecord record;
        DepthImage depth;
    };

    std::optional<LoadedFrame> next() {
        if (cursor_ >= manifest_.frames.size()) return std::nullopt;
        const FrameRecord& rec = manifest_.frames[cursor_++];
        return LoadedFrame{rec, load_frame_depth(manifest_, rec)};
    }

    const SequenceManifest& manifest() const { return manifest_; }

  private:
    SequenceManifest manifest_;
    std::size_t cursor_ = 0;
};

// ---- detection records (backbone surrogate output) ----

struct KeypointObs {
    double u = 0;
    double v = 0;
    double confidence = 0;

    bool operator==(const KeypointObs&) const = default;
};

struct DetectionInstance {
    std::string part;
    int class_id = 0;  // assembly-state class
    double confidence = 0;
    BoundingBox bbox;
    std::vector<KeypointObs> keypoints;  // exactly 17
    std::vector<double> class_scores;
    nlohmann::json extra = nlohmann::json::object();  // unknown fields, preserved
};

struct DetectionFrame {
    long frame_index = 0;
    std::vector<DetectionInstance> instances;
    nlohmann::json extra = nlohmann::json::object();
};

struct DetectionFile {
    std::vector<DetectionFrame> frames;
};

inline bool operator==(const DetectionInstance& a, const DetectionInstance& b) {
    return a.part == b.part && a.class_id == b.class_id && a.confidence == b.confidence &&
           a.bbox.x == b.bbox.x && a.bbox.y == b.bbox.y && a.bbox.w == b.bbox.w &&
           a.bbox.h == b.bbox.h && a.keypoints == b.keypoints &&
           a.class_scores == b.class_scores && a.extra == b.extra;
}

inline bool operator==(const DetectionFrame& a, const DetectionFrame& b) {
    return a.frame_index == b.frame_index && a.instances == b.instances && a.extra == b.extra;
}

inline bool operator==(const DetectionFile& a, const DetectionFile& b) {
    return a.frames == b.frames;
}

inline DetectionFile read_detections(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open detections " + path.string());
    DetectionFile file;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = dataset_detail::parse_line(line, path.string(), line_no);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        DetectionFrame frame;
        if (!j.contains("frame") || !j["frame"].is_number_integer())
            fail(ErrorCode::SchemaViolation, where + ": missing frame index");
        frame.frame_index = j["frame"].get<long>();
        for (auto& ji : j.value("instances", nlohmann::json::array())) {
            DetectionInstance inst;
            inst.part = ji.value("part", "");
            if (inst.part.empty()) fail(ErrorCode::SchemaViolation, where + ": instance without part");
            inst.class_id = ji.value("class_id", 0);
            inst.confidence = ji.value("confidence", 0.0);
            const auto jb = ji.value("bbox", nlohmann::json::array());
            if (jb.size() != 4) fail(ErrorCode::SchemaViolation, where + ": bbox must be [x,y,w,h]");
            inst.bbox = {jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(),
                         jb[3].get<double>()};
            const auto jk = ji.value("keypoints", nlohmann::json::array());
            if (static_cast<int>(jk.size()) != kKeypointCount)
                fail(ErrorCode::SchemaViolation,
                     where + ": expected " + std::to_string(kKeypointCount) + " keypoints, got " +
                         std::to_string(jk.size()));
            for (const auto& kp : jk) {
                if (!kp.is_array() || kp.size() != 3)
                    fail(ErrorCode::SchemaViolation, where + ": keypoint must be [u,v,confidence]");
                inst.keypoints.push_back(
                    {kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>()});
            }
            for (const auto& s : ji.value("scores", nlohmann::json::array())) {
                const double v = s.get<double>();
                if (v < 0) fail(ErrorCode::SchemaViolation, where + ": class scores must be >= 0");
                inst.class_scores.push_back(v);
            }
            for (const char* known :
                 {"part", "class_id", "confidence", "bbox", "keypoints", "scores"})
                ji.erase(known);
            inst.extra = std::move(ji);
            frame.instances.push_back(std::move(inst));
        }
        j.erase("frame");
        j.erase("instances");
        frame.extra = std::move(j);
        file.frames.push_back(std::move(frame));
    }
    return file;
}

inline void write_detections(const std::filesystem::path& path, const DetectionFile& file) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write detections " + path.string());
    for (const auto& frame : file.frames) {
        nlohmann::json j = frame.extra.is_object() ? frame.extra : nlohmann::json::object();
        j["frame"] = frame.frame_index;
        nlohmann::json instances = nlohmann::json::array();
        for (const auto& inst : frame.instances) {
            nlohmann::json ji = inst.extra.is_object() ? inst.extra : nlohmann::json::object();
            ji["part"] = inst.part;
            ji["class_id"] = inst.class_id;
            ji["confidence"] = inst.confidence;
            ji["bbox"] = {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h};
            nlohmann::json kps = nlohmann::json::array();
            for (const auto& kp : inst.keypoints) kps.push_back({kp.u, kp.v, kp.confidence});
            ji["keypoints"] = kps;
            ji["scores"] = inst.class_scores;
            instances.push_back(std::move(ji));
        }
        j["instances"] = std::move(instances);
        out << j.dump() << "\n";
    }
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

// ---- pipeline output: per-frame estimates ----

struct FrameEstimate {
    long frame_index = 0;
    std::map<std::string, RigidTransform> poses;  // refined, camera frame
    StateDistribution state_dist;
    int state = 0;
    bool pose_evidence = false;  // false: state came from detector/history only
    std::vector<std::string> notes;  // per-part failures etc., never fatal
};

inline void write_estimates(const std::filesystem::path& path,
                            const std::vector<FrameEstimate>& estimates) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write estimates " + path.string());
    for (const auto& est : estimates) {
        nlohmann::json j;
        j["frame"] = est.frame_index;
        j["state"] = est.state;
        j["state_dist"] = est.state_dist.p;
        j["pose_evidence"] = est.pose_evidence;
        nlohmann::json poses = nlohmann::json::object();
        for (const auto& [pid, pose] : est.poses) poses[pid] = dataset_detail::pose_to_json(pose);
        j["poses"] = poses;
        j["notes"] = est.notes;
        out << j.dump() << "\n";
    }
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline std::vector<FrameEstimate> read_estimates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open estimates " + path.string());
    std::vector<FrameEstimate> estimates;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = dataset_detail::parse_line(line, path.string(), line_no);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        FrameEstimate est;
        est.frame_index = j.value("frame", -1L);
        est.state = j.value("state", 0);
        est.state_dist.p = j.value("state_dist", std::vector<double>{});
        est.pose_evidence = j.value("pose_evidence", false);
        if (j.contains("poses"))
            for (const auto& [pid, jpose] : j["poses"].items())
                est.poses[pid] = dataset_detail::pose_from_json(jpose, where);
        est.notes = j.value("notes", std::vector<std::string>{});
        estimates.push_back(std::move(est));
    }
    return estimates;
}

// ---- timing sidecar ----
//
// Wall-clock numbers vary run to run, so they travel next to the estimates
// rather than inside them; the estimate stream itself stays byte-reproducible.

inline void write_timing(const std::filesystem::path& path, const std::vector<double>& per_frame_ms) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write timing " + path.string());
    double mean = 0;
    for (double v : per_frame_ms) mean += v;
    if (!per_frame_ms.empty()) mean /= static_cast<double>(per_frame_ms.size());
    nlohmann::json j{{"per_frame_ms", per_frame_ms}, {"mean_ms", mean}};
    out << j.dump(2) << "\n";
}

inline std::vector<double> read_timing(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
        return {};
    }
    return j.value("per_frame_ms", std::vector<double>{});
}

// ---- evaluation reports ----

inline nlohmann::json report_to_json(const SequenceReport& report) {
    nlohmann::json j;
    j["assembly"] = report.assembly_id;
    j["frame_count"] = report.frame_count;
    j["mean_e_trans_mm"] = report.mean_e_trans_mm;
    j["mean_e_rot_deg"] = report.mean_e_rot_deg;
    j["add_accuracy_pct"] = report.add_accuracy_pct;
    j["detection_miss_rate_pct"] = report.detection_miss_rate_pct;
    j["macro_f1"] = report.state_scores.macro_f1;
    j["mean_runtime_ms"] = report.mean_runtime_ms;
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : report.per_part)
        parts.push_back({{"part", p.part_id},
                         {"frames", p.frames},
                         {"detected", p.detected},
                         {"mean_e_trans_mm", p.mean_e_trans_mm},
                         {"mean_e_rot_deg", p.mean_e_rot_deg},
                         {"add_accuracy_pct", p.add_accuracy_pct},
                         {"miss_rate_pct", p.miss_rate_pct}});
    j["per_part"] = parts;
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : report.state_scores.per_state)
        states.push_back({{"state", s.state_id},
                          {"support", s.support},
                          {"precision", s.precision},
                          {"recall", s.recall},
                          {"f1", s.f1}});
    j["per_state"] = states;
    return j;
}

inline void write_report(const std::filesystem::path& path, const SequenceReport& report) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write report " + path.string());
    out << report_to_json(report).dump(2) << "\n";
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

// Human-readable table mirroring the usual result columns:
// F1 / ADD(S) / e_trans [mm] / e_rot [deg] / runtime [ms].
inline std::string report_table(const SequenceReport& report) {
    std::ostringstream os;
    os << std::fixed;
    os << "sequence: " << report.assembly_id << "  (" << report.frame_count << " frames)\n";
    os << "  macro F1: " << std::setprecision(2) << report.state_scores.macro_f1
       << "   ADD(S): " << report.add_accuracy_pct << "%"
       << "   e_trans: " << report.mean_e_trans_mm << " mm"
       << "   e_rot: " << report.mean_e_rot_deg << " deg"
       << "   runtime: " << report.mean_runtime_ms << " ms/frame\n";
    os << "  part              frames  miss%   e_trans[mm]  e_rot[deg]  ADD(S)%\n";
    for (const auto& p : report.per_part) {
        os << "  " << std::left << std::setw(16) << p.part_id << std::right << std::setw(8)
           << p.frames << std::setw(7) << std::setprecision(1) << p.miss_rate_pct << std::setw(13)
           << std::setprecision(2) << p.mean_e_trans_mm << std::setw(12) << p.mean_e_rot_deg
           << std::setw(9) << std::setprecision(1) << p.add_accuracy_pct << "\n";
    }
    os << "  state   support  precision  recall     F1\n";
    for (const auto& s : report.state_scores.per_state) {
        if (s.support == 0 && s.precision == 0 && s.recall == 0) continue;
        os << "  " << std::left << std::setw(8) << s.state_id << std::right << std::setw(7)
           << s.support << std::setw(11) << std::setprecision(1) << s.precision << std::setw(8)
           << s.recall << std::setw(7) << s.f1 << "\n";
    }
    return os.str();
}

}  // namespace asmpose
