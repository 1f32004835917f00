#include <cstdlib>
#include <fstream>

#include "asmpose/builtin.hpp"
#include "asmpose/pipeline.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asmpose;

namespace {

struct PipelineFixture {
    testutil::TempDir assets{"pipe_assets"};
    ModelRegistry registry;
    PipelineConfig config;
    PipelineFixture() {
        builtin::write_builtin_assets(assets.path());
        registry = load_registry(assets.path() / "registry.json");
        config = load_pipeline_config(assets.path() / "config.json");
    }
    ScenarioScript short_cornerclamp() const {
        auto script = load_script(assets.path() / "scripts" / "cornerclamp.json");
        script.timeline = {{0, 4}, {1, 4}, {2, 4}};
        return script;
    }
};

PipelineFixture& fixture() {
    static PipelineFixture f;
    return f;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("noiseless closure: every pose and state is recovered") {
    auto& f = fixture();
    const auto& graph = f.registry.get("CornerClamp");
    testutil::TempDir out("pipe_run");
    const auto scenario = run_scenario(f.short_cornerclamp(), graph, NoiseConfig{}, out.path());

    const auto result = run_sequence(scenario.manifest, scenario.detections, graph, f.config);
    REQUIRE(result.estimates.size() == 12);
    CHECK(result.pose_failures == 0);

    for (std::size_t i = 0; i < result.estimates.size(); ++i) {
        const auto& est = result.estimates[i];
        const auto& rec = scenario.manifest.frames[i];
        CHECK(est.state == rec.gt_state);
        for (const auto& [part, gt_pose] : rec.gt_poses) {
            REQUIRE(est.poses.count(part));
            const auto [et, er] = pose_errors(est.poses.at(part), gt_pose);
            CHECK(et < 1.0);   // mm
            CHECK(er < 0.1);   // deg
        }
    }

    SUBCASE("evaluation of a perfect run reports perfect numbers") {
        const auto report = evaluate_sequence(result.estimates, scenario.manifest, graph,
                                              result.per_frame_ms);
        CHECK(report.state_scores.macro_f1 == doctest::Approx(100.0));
        CHECK(report.add_accuracy_pct == doctest::Approx(100.0));
        CHECK(report.mean_e_trans_mm < 1.0);
        CHECK(report.mean_e_rot_deg < 0.1);
        CHECK(report.detection_miss_rate_pct == doctest::Approx(0.0));
        CHECK(report.mean_runtime_ms > 0.0);
        CHECK(report_table(report).find("CornerClamp") != std::string::npos);
    }
}

TEST_CASE("frames without detections fall back to history") {
    auto& f = fixture();
    const auto& graph = f.registry.get("CornerClamp");
    testutil::TempDir out("pipe_empty");
    auto scenario = run_scenario(f.short_cornerclamp(), graph, NoiseConfig{}, out.path());

    scenario.detections.frames[5].instances.clear();  // mid-state-1 dropout
    const auto result = run_sequence(scenario.manifest, scenario.detections, graph, f.config);
    const auto& est = result.estimates[5];
    CHECK(est.poses.empty());
    CHECK_FALSE(est.pose_evidence);
    CHECK(est.state == 1);  // carried by the temporal term
}

TEST_CASE("detector-only weights reproduce the detector argmax") {
    auto& f = fixture();
    const auto& graph = f.registry.get("CornerClamp");
    testutil::TempDir out("pipe_dlonly");
    NoiseConfig noise;
    noise.state_confusion = 0.4;
    noise.rng_seed = 5;
    const auto scenario = run_scenario(f.short_cornerclamp(), graph, noise, out.path());

    PipelineConfig dl_only = f.config;
    dl_only.weights = {1.0, 0.0, 0.0, 0.0};
    const auto result = run_sequence(scenario.manifest, scenario.detections, graph, dl_only);
    for (std::size_t i = 0; i < result.estimates.size(); ++i) {
        const DetectionInstance* best = nullptr;
        for (const auto& inst : scenario.detections.frames[i].instances)
            if (!best || inst.confidence > best->confidence) best = &inst;
        REQUIRE(best != nullptr);
        int dl_argmax = 0;
        for (int s = 1; s < graph.state_count(); ++s)
            if (best->class_scores[s] > best->class_scores[dl_argmax]) dl_argmax = s;
        CHECK(result.estimates[i].state == dl_argmax);
    }
}

TEST_CASE("estimates and timing survive the disk round trip the cli uses") {
    auto& f = fixture();
    const auto& graph = f.registry.get("CornerClamp");
    testutil::TempDir out("pipe_disk");
    const auto scenario = run_scenario(f.short_cornerclamp(), graph, NoiseConfig{}, out.path());
    const auto result = run_sequence(scenario.manifest, scenario.detections, graph, f.config);

    write_estimates(out.path() / "estimates.jsonl", result.estimates);
    write_timing(out.path() / "timing.json", result.per_frame_ms);
    const auto estimates = read_estimates(out.path() / "estimates.jsonl");
    const auto timing = read_timing(out.path() / "timing.json");
    REQUIRE(estimates.size() == result.estimates.size());
    REQUIRE(timing.size() == result.per_frame_ms.size());

    const auto report = evaluate_sequence(estimates, scenario.manifest, graph, timing);
    CHECK(report.state_scores.macro_f1 == doctest::Approx(100.0));
}

TEST_CASE("evaluation counts threshold misses and undetected parts") {
    auto& f = fixture();
    const auto& graph = f.registry.get("CornerClamp");

    SequenceManifest manifest;
    manifest.assembly_id = "CornerClamp";
    std::vector<FrameEstimate> estimates;
    RigidTransform gt = builtin::detail::default_base_pose();
    for (int frame = 0; frame < 2; ++frame) {
        FrameRecord rec;
        rec.frame_index = frame;
        rec.depth_path = "unused.png";
        rec.gt_state = 0;
        rec.gt_poses["base"] = gt;
        manifest.frames.push_back(rec);

        FrameEstimate est;
        est.frame_index = frame;
        est.state = 0;
        est.state_dist = StateDistribution::one_hot(graph.state_count(), 0);
        est.poses["base"] = gt;
        if (frame == 1) est.poses["base"].translation.z() += 0.2;  // 200 mm off
        estimates.push_back(est);
    }

    const auto report = evaluate_sequence(estimates, manifest, graph);
    CHECK(report.add_accuracy_pct == doctest::Approx(50.0));
    CHECK(report.state_scores.macro_f1 == doctest::Approx(100.0));

    SUBCASE("missing part detection is a miss, not an error sample") {
        estimates[1].poses.clear();
        const auto r = evaluate_sequence(estimates, manifest, graph);
        CHECK(r.detection_miss_rate_pct == doctest::Approx(50.0));
        CHECK(r.add_accuracy_pct == doctest::Approx(50.0));
        CHECK(r.mean_e_trans_mm < 1e-9);  // only the detected clean frame counts
    }

    SUBCASE("misaligned estimates are rejected with the offending frame") {
        estimates[1].frame_index = 7;
        CHECK_THROWS_WITH_AS(evaluate_sequence(estimates, manifest, graph),
                             doctest::Contains("frame index 1"), Error);
        estimates.pop_back();
        CHECK_THROWS_AS(evaluate_sequence(estimates, manifest, graph), Error);
    }
}

TEST_CASE("config loading applies the file and the environment override") {
    auto& f = fixture();
    CHECK(f.config.weights.w_f1 == doctest::Approx(0.25));
    CHECK(f.config.refine.weight_scale == doctest::Approx(0.01));
    CHECK(f.config.ransac.min_inliers == 6);
    CHECK(f.config.state_detect.sigma_t == doctest::Approx(0.01));

    setenv("ASMPOSE_OUTPUT_DIR", "/tmp/asmpose_env_out", 1);
    const auto cfg = load_pipeline_config(f.assets.path() / "config.json");
    unsetenv("ASMPOSE_OUTPUT_DIR");
    CHECK(cfg.output_dir == std::filesystem::path("/tmp/asmpose_env_out"));

    testutil::TempDir tmp("cfgbad");
    std::ofstream(tmp.path() / "config.json") << R"({"registry": "nope.json"})";
    CHECK_THROWS_AS(load_pipeline_config(tmp.path() / "config.json"), Error);
}

TEST_CASE("detections that disagree with the registry are rejected") {
    auto& f = fixture();
    const auto& graph = f.registry.get("CornerClamp");
    testutil::TempDir out("pipe_baddet");
    auto scenario = run_scenario(f.short_cornerclamp(), graph, NoiseConfig{}, out.path());

    SUBCASE("unknown part") {
        scenario.detections.frames[0].instances[0].part = "widget";
        CHECK_THROWS_AS(run_sequence(scenario.manifest, scenario.detections, graph, f.config),
                        Error);
    }
    SUBCASE("score vector arity") {
        scenario.detections.frames[0].instances[0].class_scores.pop_back();
        CHECK_THROWS_AS(run_sequence(scenario.manifest, scenario.detections, graph, f.config),
                        Error);
    }
}

TEST_SUITE_END();
