#include <random>

#include "asmpose/metrics.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asmpose;

namespace {

PointCloud3 random_model(std::mt19937_64& rng, int n, double scale = 0.06) {
    PointCloud3 cloud;
    for (int i = 0; i < n; ++i) cloud.points.push_back(testutil::random_point(rng, scale));
    return cloud;
}

// Independent nearest-neighbor mean, written as the naive double loop.
double adds_bruteforce(const RigidTransform& est, const RigidTransform& gt,
                       const PointCloud3& model) {
    double sum = 0;
    for (const auto& p : model.points) {
        const Eigen::Vector3d e = est.apply(p);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : model.points) best = std::min(best, (e - gt.apply(q)).norm());
        sum += best;
    }
    return 1000.0 * sum / model.points.size();
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("add of identical poses is zero") {
    std::mt19937_64 rng(3);
    const auto model = random_model(rng, 50);
    const auto pose = testutil::random_pose(rng);
    CHECK(add_error(pose, pose, model, false) == doctest::Approx(0.0));
    CHECK(add_error(pose, pose, model, true) == doctest::Approx(0.0));
}

TEST_CASE("pure translation shifts add by exactly its length") {
    std::mt19937_64 rng(5);
    const auto model = random_model(rng, 64);
    const auto gt = testutil::random_pose(rng);
    RigidTransform est = gt;
    est.translation += Eigen::Vector3d(0.005, 0, 0);  // 5 mm
    CHECK(add_error(est, gt, model, false) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("symmetric add equals the brute-force double loop") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto model = random_model(rng, 100);
        const auto est = testutil::random_pose(rng, 0.05);
        const auto gt = testutil::random_pose(rng, 0.05);
        const double fast = add_error(est, gt, model, true);
        const double brute = adds_bruteforce(est, gt, model);
        CHECK(fast == doctest::Approx(brute).epsilon(1e-9));
    }
}

TEST_CASE("symmetric add never exceeds asymmetric add") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto model = random_model(rng, 40);
        const auto est = testutil::random_pose(rng, 0.05);
        const auto gt = testutil::random_pose(rng, 0.05);
        CHECK(add_error(est, gt, model, true) <= add_error(est, gt, model, false) + 1e-12);
    }
}

TEST_CASE("add is invariant under a common rigid motion") {
    std::mt19937_64 rng(13);
    const auto model = random_model(rng, 60);
    const auto est = testutil::random_pose(rng, 0.05);
    const auto gt = testutil::random_pose(rng, 0.05);
    const double base_a = add_error(est, gt, model, false);
    const double base_s = add_error(est, gt, model, true);
    for (int trial = 0; trial < 10; ++trial) {
        const auto motion = testutil::random_pose(rng);
        const double moved_a = add_error(compose(motion, est), compose(motion, gt), model, false);
        const double moved_s = add_error(compose(motion, est), compose(motion, gt), model, true);
        CHECK(moved_a == doctest::Approx(base_a).epsilon(1e-9));
        CHECK(moved_s == doctest::Approx(base_s).epsilon(1e-9));
    }
}

TEST_CASE("pose_errors analytic cases") {
    std::mt19937_64 rng(17);
    const auto pose = testutil::random_pose(rng);
    {
        const auto [et, er] = pose_errors(pose, pose);
        CHECK(et == doctest::Approx(0.0));
        CHECK(er == doctest::Approx(0.0));
    }
    {
        RigidTransform rot = pose;
        rot.rotation = pose.rotation *
                       Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d(1, 1, 1).normalized())
                           .toRotationMatrix();
        const auto [et, er] = pose_errors(rot, pose);
        CHECK(et == doctest::Approx(0.0));
        CHECK(er == doctest::Approx(90.0).epsilon(1e-9));
    }
    {
        RigidTransform shifted = pose;
        shifted.translation += Eigen::Vector3d(0.003, 0.004, 0.0);
        const auto [et, er] = pose_errors(shifted, pose);
        CHECK(et == doctest::Approx(5.0).epsilon(1e-12));  // 3-4-5 triangle
        CHECK(er == doctest::Approx(0.0));
    }
}

TEST_CASE("rotation error is symmetric and triangle-inequality consistent") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = testutil::random_rotation(rng);
        const auto b = testutil::random_rotation(rng);
        const auto c = testutil::random_rotation(rng);
        CHECK(rotation_angle_deg(a, b) == doctest::Approx(rotation_angle_deg(b, a)).epsilon(1e-9));
        CHECK(rotation_angle_deg(a, c) <=
              rotation_angle_deg(a, b) + rotation_angle_deg(b, c) + 1e-6);
    }
}

TEST_CASE("add_accuracy counts threshold hits") {
    std::vector<PoseErrorRecord> records(2);
    records[0].add_mm = 50.0;
    records[1].add_mm = 150.0;
    CHECK(add_accuracy(records) == doctest::Approx(50.0));

    std::vector<PoseErrorRecord> zeros(5);
    CHECK(add_accuracy(zeros) == doctest::Approx(100.0));
    CHECK_THROWS_AS(add_accuracy(std::vector<PoseErrorRecord>{}), Error);
}

TEST_CASE("constructed 10 percent corruption rate scores 90") {
    std::vector<PoseErrorRecord> records;
    for (int i = 0; i < 100; ++i) {
        PoseErrorRecord r;
        r.add_mm = (i % 10 == 0) ? 500.0 : 2.0;
        records.push_back(r);
    }
    CHECK(add_accuracy(records) == doctest::Approx(90.0));
}

TEST_CASE("undetected frames fail the threshold via infinite add") {
    std::vector<PoseErrorRecord> records(4);
    records[3].detected = false;
    records[3].add_mm = std::numeric_limits<double>::infinity();
    CHECK(add_accuracy(records) == doctest::Approx(75.0));
}

TEST_CASE("f1 of a perfect prediction is 100") {
    std::vector<int> seq = {0, 0, 1, 2, 2, 1};
    const auto rep = state_f1(seq, seq, 3);
    CHECK(rep.macro_f1 == doctest::Approx(100.0));
}

TEST_CASE("total miss scores zero for the missed state") {
    std::vector<int> gt(6, 0), pred(6, 1);
    const auto rep = state_f1(pred, gt, 2);
    CHECK(rep.per_state[0].f1 == doctest::Approx(0.0));
    CHECK(rep.macro_f1 == doctest::Approx(0.0));  // only state 0 present in gt
}

TEST_CASE("hand-computed two-state confusion example") {
    // gt=(0,0,1,1), pred=(0,1,1,1): P(1)=2/3, R(1)=1, F1(1)=80
    const std::vector<int> gt = {0, 0, 1, 1};
    const std::vector<int> pred = {0, 1, 1, 1};
    const auto rep = state_f1(pred, gt, 2);
    CHECK(rep.per_state[1].precision == doctest::Approx(100.0 * 2.0 / 3.0));
    CHECK(rep.per_state[1].recall == doctest::Approx(100.0));
    CHECK(rep.per_state[1].f1 == doctest::Approx(80.0));
}

TEST_CASE("states absent from ground truth stay out of the macro mean") {
    const std::vector<int> gt = {0, 0, 0, 0};
    const std::vector<int> pred = {0, 0, 2, 0};
    const auto rep = state_f1(pred, gt, 3);
    // state 0: P=100, R=75 -> F1 = 85.714...; states 1,2 absent from gt
    CHECK(rep.macro_f1 == doctest::Approx(2.0 * 100 * 75 / 175.0));
}

TEST_CASE("f1 is invariant under a consistent label permutation") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> u(0, 3);
    std::vector<int> gt, pred;
    for (int i = 0; i < 200; ++i) {
        gt.push_back(u(rng));
        pred.push_back(u(rng));
    }
    const auto base = state_f1(pred, gt, 4);
    const std::array<int, 4> perm = {2, 0, 3, 1};
    std::vector<int> gt_p, pred_p;
    for (int v : gt) gt_p.push_back(perm[v]);
    for (int v : pred) pred_p.push_back(perm[v]);
    const auto permuted = state_f1(pred_p, gt_p, 4);
    CHECK(permuted.macro_f1 == doctest::Approx(base.macro_f1).epsilon(1e-12));
    for (int s = 0; s < 4; ++s)
        CHECK(permuted.per_state[perm[s]].f1 == doctest::Approx(base.per_state[s].f1));
}

TEST_CASE("mismatched sequence lengths are rejected") {
    const std::vector<int> a = {0, 1};
    const std::vector<int> b = {0, 1, 2};
    CHECK_THROWS_AS(state_f1(a, b, 3), Error);
}

TEST_SUITE_END();
