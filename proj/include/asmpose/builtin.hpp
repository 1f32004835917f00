#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asmpose/mesh.hpp"
#include "asmpose/simulator.hpp"

// Built-in demo assemblies. Geometry is synthetic but follows the shape of
// 3D-printable clamp/vise hardware: a flat base plate with plate-proportioned
// parts mounted side by side, seen by a fixed top-down camera. Each assembly
// carries one deliberate wrong-assembly state (a part mounted with its
// predecessor missing).

namespace asmpose::builtin {

namespace detail {

struct PartSpec {
    std::string id;
    double w, l, h;          // meters
    double mx = 0, my = 0;   // mount offset on the base, model frame
    double yaw_deg = 0;      // mount yaw
    int z_symmetry = 1;      // 1 = asymmetric, 4 = quarter-turn symmetric
};

struct AssemblySpec {
    std::string id;
    PartSpec base;
    std::vector<PartSpec> chain;  // state k mounts chain[0..k-1]
    int error_keep = 0;           // error state: chain[0..keep-1] + chain[keep+1]
    std::string error_name;
};

inline std::vector<AssemblySpec> catalog() {
    std::vector<AssemblySpec> specs;
    specs.push_back({"CornerClamp",
                     {"base", 0.20, 0.16, 0.025},
                     {{"arm", 0.09, 0.06, 0.02, -0.035, 0.030, 25.0},
                      {"knob", 0.066, 0.066, 0.02, 0.045, -0.032, 0.0, 4}},
                     0,
                     "knob_without_arm"});
    specs.push_back({"NanoVise",
                     {"base", 0.21, 0.18, 0.025},
                     {{"rail", 0.12, 0.035, 0.02, -0.030, 0.058, 0.0},
                      {"jaw_fixed", 0.05, 0.04, 0.02, -0.070, -0.006, 90.0},
                      {"jaw_slide", 0.05, 0.04, 0.02, -0.010, -0.006, 90.0},
                      {"spindle", 0.09, 0.03, 0.02, 0.060, 0.004, 15.0},
                      {"handle", 0.07, 0.035, 0.02, 0.058, -0.058, 80.0},
                      {"block_a", 0.045, 0.045, 0.02, -0.072, -0.060, 0.0, 4},
                      {"block_b", 0.045, 0.045, 0.02, -0.016, -0.062, 30.0, 4}},
                     1,
                     "jaw_slide_without_jaw_fixed"});
    specs.push_back({"ScrewClamp",
                     {"base", 0.22, 0.15, 0.025},
                     {{"bar_a", 0.06, 0.04, 0.02, -0.080, 0.045, 0.0},
                      {"bar_b", 0.06, 0.04, 0.02, -0.010, 0.045, 0.0},
                      {"pad", 0.05, 0.05, 0.02, 0.055, 0.045, 0.0, 4},
                      {"screw_a", 0.07, 0.03, 0.02, -0.075, 0.000, 10.0},
                      {"screw_b", 0.07, 0.03, 0.02, 0.000, 0.000, -10.0},
                      {"nut_a", 0.04, 0.04, 0.02, 0.065, 0.000, 0.0, 4},
                      {"nut_b", 0.04, 0.04, 0.02, -0.085, -0.045, 0.0, 4},
                      {"plate", 0.08, 0.045, 0.02, -0.010, -0.047, 0.0},
                      {"grip", 0.05, 0.035, 0.02, 0.065, -0.045, 25.0}},
                     6,
                     "plate_without_nut_b"});
    specs.push_back({"GearedCaliper",
                     {"base", 0.18, 0.11, 0.02},
                     {{"beam", 0.06, 0.04, 0.02, -0.055, 0.012, 0.0},
                      {"slider", 0.055, 0.04, 0.02, 0.005, 0.012, 0.0},
                      {"gear", 0.05, 0.05, 0.02, 0.060, 0.012, 45.0, 4},
                      {"dial", 0.045, 0.045, 0.02, -0.020, -0.035, 0.0, 4}},
                     1,
                     "gear_without_slider"});
    return specs;
}

inline RigidTransform mount_pose(const AssemblySpec& spec, const PartSpec& part) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(part.yaw_deg * M_PI / 180.0, Eigen::Vector3d::UnitZ())
                     .toRotationMatrix();
    t.translation = {part.mx, part.my, spec.base.h / 2 + part.h / 2};
    return t;
}

// Loose parts rest on the table around the base, on an elliptical ring.
inline RigidTransform scatter_pose(const AssemblySpec& spec, std::size_t part_index) {
    const double angle = 2.0 * M_PI * static_cast<double>(part_index) /
                             static_cast<double>(spec.chain.size()) +
                         0.7;
    const auto& part = spec.chain[part_index];
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd((20.0 + 35.0 * part_index) * M_PI / 180.0,
                                   Eigen::Vector3d::UnitZ())
                     .toRotationMatrix();
    t.translation = {0.33 * std::cos(angle), 0.24 * std::sin(angle),
                     (part.h - spec.base.h) / 2.0};
    return t;
}

inline RigidTransform default_base_pose() {
    // top-down view with a mild tilt, as an assembly on a table sits under a
    // roughly overhead camera
    RigidTransform t;
    t.rotation = (Eigen::AngleAxisd(10.0 * M_PI / 180.0,
                                    Eigen::Vector3d(std::cos(0.5), std::sin(0.5), 0)) *
                  Eigen::AngleAxisd(8.0 * M_PI / 180.0, Eigen::Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();
    t.translation = {0.01, -0.005, 0.80};
    return t;
}

inline nlohmann::json quaternion_json(const Eigen::Matrix3d& r) {
    const Eigen::Quaterniond q(r);
    return nlohmann::json::array({q.w(), q.x(), q.y(), q.z()});
}

}  // namespace detail

// Materializes meshes, registry, scenario scripts, noise examples, and a
// default pipeline config under `dir`. Output is deterministic.
inline void write_builtin_assets(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "meshes");
    fs::create_directories(dir / "scripts");
    fs::create_directories(dir / "noise");

    nlohmann::json registry;
    registry["assemblies"] = nlohmann::json::array();

    for (const auto& spec : detail::catalog()) {
        nlohmann::json ja;
        ja["id"] = spec.id;
        ja["base_part"] = spec.base.id;

        auto add_part = [&](const detail::PartSpec& part) {
            const std::string mesh_name =
                "meshes/" + spec.id + "_" + part.id + ".obj";
            save_obj(dir / mesh_name, make_box({part.w, part.l, part.h}));
            nlohmann::json jp;
            jp["id"] = part.id;
            jp["mesh"] = mesh_name;
            jp["symmetric"] = part.z_symmetry > 1;
            nlohmann::json syms = nlohmann::json::array();
            for (int k = 1; k < part.z_symmetry; ++k)
                syms.push_back(detail::quaternion_json(
                    Eigen::AngleAxisd(2.0 * M_PI * k / part.z_symmetry, Eigen::Vector3d::UnitZ())
                        .toRotationMatrix()));
            jp["symmetries"] = syms;
            return jp;
        };

        nlohmann::json parts = nlohmann::json::array();
        parts.push_back(add_part(spec.base));
        for (const auto& part : spec.chain) parts.push_back(add_part(part));
        ja["parts"] = parts;

        nlohmann::json states = nlohmann::json::array();
        const int n_regular = static_cast<int>(spec.chain.size()) + 1;
        for (int s = 0; s < n_regular; ++s) {
            nlohmann::json js;
            js["id"] = s;
            js["name"] = (s == 0) ? "unassembled" : "step_" + std::to_string(s);
            js["error"] = false;
            nlohmann::json members = nlohmann::json::array({spec.base.id});
            nlohmann::json rels;
            rels[spec.base.id] = dataset_detail::pose_to_json(RigidTransform::identity());
            for (int k = 0; k < s; ++k) {
                members.push_back(spec.chain[k].id);
                rels[spec.chain[k].id] =
                    dataset_detail::pose_to_json(detail::mount_pose(spec, spec.chain[k]));
            }
            js["members"] = members;
            js["relative_poses"] = rels;
            states.push_back(js);
        }
        {
            nlohmann::json js;
            js["id"] = n_regular;
            js["name"] = spec.error_name;
            js["error"] = true;
            nlohmann::json members = nlohmann::json::array({spec.base.id});
            nlohmann::json rels;
            rels[spec.base.id] = dataset_detail::pose_to_json(RigidTransform::identity());
            for (int k = 0; k < spec.error_keep; ++k) {
                members.push_back(spec.chain[k].id);
                rels[spec.chain[k].id] =
                    dataset_detail::pose_to_json(detail::mount_pose(spec, spec.chain[k]));
            }
            const auto& skipped_to = spec.chain[spec.error_keep + 1];
            members.push_back(skipped_to.id);
            rels[skipped_to.id] = dataset_detail::pose_to_json(detail::mount_pose(spec, skipped_to));
            js["members"] = members;
            js["relative_poses"] = rels;
            states.push_back(js);
        }
        ja["states"] = states;
        ja["num_states"] = states.size();
        registry["assemblies"].push_back(ja);
    }

    {
        std::ofstream out(dir / "registry.json");
        out << registry.dump(2) << "\n";
    }

    // scenario scripts
    for (const auto& spec : detail::catalog()) {
        ScenarioScript script;
        script.assembly_id = spec.id;
        script.camera = CameraIntrinsics{};
        script.base_pose = detail::default_base_pose();
        for (std::size_t k = 0; k < spec.chain.size(); ++k)
            script.scatter_poses[spec.chain[k].id] = detail::scatter_pose(spec, k);

        const int n_regular = static_cast<int>(spec.chain.size()) + 1;
        ScenarioScript full = script;
        const int frames_per_state = (spec.id == "CornerClamp") ? 20 : 12;
        for (int s = 0; s < n_regular; ++s) full.timeline.push_back({s, frames_per_state});
        std::string lower = spec.id;
        for (auto& c : lower) c = static_cast<char>(std::tolower(c));
        save_script(dir / "scripts" / (lower + ".json"), full);

        if (spec.id == "CornerClamp") {
            ScenarioScript err = script;
            err.timeline = {{0, 10}, {1, 10}, {3, 15}, {2, 10}};  // wrong assembly mid-sequence
            save_script(dir / "scripts" / "cornerclamp_error.json", err);
        }
    }

    // noise presets
    {
        nlohmann::json zero{{"keypoint_sigma", 0.0}, {"keypoint_dropout", 0.0},
                            {"outlier_rate", 0.0},   {"state_confusion", 0.0},
                            {"depth_noise_sigma", 0.0}, {"rng_seed", 0}};
        std::ofstream out(dir / "noise" / "zero.json");
        out << zero.dump(2) << "\n";

        nlohmann::json backbone{{"keypoint_sigma", 1.5}, {"keypoint_dropout", 0.05},
                                {"outlier_rate", 0.05},  {"state_confusion", 0.15},
                                {"depth_noise_sigma", 0.002}, {"rng_seed", 1234}};
        std::ofstream out2(dir / "noise" / "sim_backbone.json");
        out2 << backbone.dump(2) << "\n";
    }

    // default pipeline config
    {
        nlohmann::json cfg;
        cfg["registry"] = "registry.json";
        cfg["backbone"] = "sim-xl";
        cfg["weights"] = {{"w_dl", 1.0}, {"w_p", 1.0}, {"w_f", 0.5}, {"w_f1", 0.25}};
        cfg["ransac"] = {{"max_iterations", 200}, {"inlier_threshold", 6.0},
                         {"min_inliers", 6},      {"confidence_target", 0.99},
                         {"rng_seed", 0}};
        cfg["refine"] = {{"surface_sample_count", 500}, {"near_fraction", 0.3},
                         {"weight_scale", 0.01},        {"min_valid_points", 10}};
        cfg["state_detect"] = {{"tol_t", 0.05},  {"tol_r", 25.0}, {"sigma_t", 0.01},
                               {"sigma_r", 5.0}, {"loose_penalty", 0.05}};
        std::ofstream out(dir / "config.json");
        out << cfg.dump(2) << "\n";
    }
}

}  // namespace asmpose::builtin
