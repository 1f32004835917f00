// Command-line front end: simulate scripted assembly sequences, run the pose
// and state estimation pipeline over them, and score the results.
//
// Exit codes: 0 success, 2 validation failure (bad arguments or files),
// 3 runtime/io failure.

#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "asmpose/builtin.hpp"
#include "asmpose/pipeline.hpp"
#include "asmpose/simulator.hpp"

namespace fs = std::filesystem;
using namespace asmpose;

namespace {

FusionWeights parse_weights(const std::string& csv) {
    std::stringstream ss(csv);
    std::vector<double> values;
    std::string token;
    while (std::getline(ss, token, ',')) values.push_back(std::stod(token));
    if (values.size() != 4)
        fail(ErrorCode::InvalidArgument, "--weights expects w_dl,w_p,w_f,w_f1");
    FusionWeights w{values[0], values[1], values[2], values[3]};
    w.validate();
    return w;
}

int cmd_simulate(const std::string& registry_path, const std::string& script_path,
                 const std::string& noise_path, std::int64_t seed, bool seed_set,
                 const std::string& out_dir) {
    const auto registry = load_registry(registry_path);
    const auto script = load_script(script_path);
    NoiseConfig noise;
    if (!noise_path.empty()) noise = load_noise_config(noise_path);
    if (seed_set) noise.rng_seed = static_cast<std::uint64_t>(seed);

    const auto& graph = registry.get(script.assembly_id);
    const auto result = run_scenario(script, graph, noise, out_dir);

    std::set<int> states;
    for (const auto& rec : result.manifest.frames) states.insert(rec.gt_state);
    std::cout << "simulated " << result.manifest.frames.size() << " frames of "
              << script.assembly_id << " across " << states.size() << " states\n"
              << "  manifest:   " << result.manifest_path.string() << "\n"
              << "  detections: " << result.detections_path.string() << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& manifest_path,
            const std::string& detections_path, const std::string& weights_csv,
            const std::string& out_dir) {
    auto config = load_pipeline_config(config_path);
    if (!weights_csv.empty()) config.weights = parse_weights(weights_csv);
    if (!out_dir.empty()) config.output_dir = out_dir;

    const auto registry = load_registry(config.registry_path);
    const auto manifest = load_manifest(manifest_path);
    const auto detections = read_detections(detections_path);
    const auto& graph = registry.get(manifest.assembly_id);

    const auto result = run_sequence(manifest, detections, graph, config);

    fs::create_directories(config.output_dir);
    const auto estimates_path = config.output_dir / "estimates.jsonl";
    write_estimates(estimates_path, result.estimates);
    write_timing(config.output_dir / "timing.json", result.per_frame_ms);

    double mean_ms = 0;
    for (double v : result.per_frame_ms) mean_ms += v;
    if (!result.per_frame_ms.empty()) mean_ms /= static_cast<double>(result.per_frame_ms.size());
    std::cout << "processed " << result.estimates.size() << " frames ("
              << result.pose_failures << " per-part pose failures), mean " << mean_ms
              << " ms/frame\n"
              << "  estimates: " << estimates_path.string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& manifest_path,
                 const std::string& estimates_path, const std::string& timing_path,
                 const std::string& out_dir) {
    const auto config = load_pipeline_config(config_path);
    const auto registry = load_registry(config.registry_path);
    const auto manifest = load_manifest(manifest_path);
    const auto estimates = read_estimates(estimates_path);
    const auto& graph = registry.get(manifest.assembly_id);

    fs::path timing_file = timing_path.empty()
                               ? fs::path(estimates_path).parent_path() / "timing.json"
                               : fs::path(timing_path);
    const auto timing = read_timing(timing_file);

    const auto report = evaluate_sequence(estimates, manifest, graph, timing);

    const fs::path out = out_dir.empty() ? config.output_dir : fs::path(out_dir);
    fs::create_directories(out);
    write_report(out / "report.json", report);
    const std::string table = report_table(report);
    std::ofstream(out / "report.txt") << table;
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"assembly pose and state estimation pipeline"};
    app.require_subcommand(1);

    std::function<int()> action;

    // simulate
    auto* sim = app.add_subcommand("simulate", "render a scripted assembly sequence to disk");
    std::string sim_registry, sim_script, sim_noise, sim_out = "out";
    std::int64_t sim_seed = 0;
    sim->add_option("--registry", sim_registry, "model registry json")->required();
    sim->add_option("--script", sim_script, "scenario script json")->required();
    sim->add_option("--noise", sim_noise, "noise config json (default: no noise)");
    auto* seed_opt = sim->add_option("--seed", sim_seed, "override the noise rng seed");
    sim->add_option("--out", sim_out, "output directory");
    sim->callback([&, seed_opt] {
        action = [&, seed_set = seed_opt->count() > 0] {
            return cmd_simulate(sim_registry, sim_script, sim_noise, sim_seed, seed_set, sim_out);
        };
    });

    // run
    auto* run = app.add_subcommand("run", "estimate poses and assembly states for a sequence");
    std::string run_config, run_manifest, run_detections, run_weights, run_out;
    run->add_option("--config", run_config, "pipeline config json")->required();
    run->add_option("--manifest", run_manifest, "sequence manifest jsonl")->required();
    run->add_option("--detections", run_detections, "detections jsonl")->required();
    run->add_option("--weights", run_weights, "fusion weights w_dl,w_p,w_f,w_f1");
    run->add_option("--out", run_out, "output directory (overrides config)");
    run->callback([&] {
        action = [&] { return cmd_run(run_config, run_manifest, run_detections, run_weights,
                                      run_out); };
    });

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "score estimates against ground truth");
    std::string eval_config, eval_manifest, eval_estimates, eval_timing, eval_out;
    eval->add_option("--config", eval_config, "pipeline config json")->required();
    eval->add_option("--manifest", eval_manifest, "sequence manifest jsonl")->required();
    eval->add_option("--estimates", eval_estimates, "estimates jsonl")->required();
    eval->add_option("--timing", eval_timing, "timing sidecar (default: next to estimates)");
    eval->add_option("--out", eval_out, "report directory (overrides config)");
    eval->callback([&] {
        action = [&] {
            return cmd_evaluate(eval_config, eval_manifest, eval_estimates, eval_timing, eval_out);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_validation() ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
