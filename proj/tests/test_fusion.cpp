#include <random>
#include <set>

#include "asmpose/fusion.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace asmpose;

namespace {

AssemblyGraph chain_graph(int n) {
    AssemblyGraph g;
    g.assembly_id = "chain";
    g.base_part = "base";
    g.parts.push_back({.part_id = "base"});
    for (int s = 0; s < n; ++s) {
        AssemblyState st;
        st.state_id = s;
        st.member_parts = {"base"};
        st.relative_poses["base"] = RigidTransform::identity();
        g.states.push_back(st);
    }
    g.build_neighbors();
    return g;
}

StateDistribution dist(std::vector<double> p) {
    StateDistribution d;
    d.p = std::move(p);
    return d;
}

}  // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("fuse_dl_pose arithmetic") {
    FusionWeights w;

    SUBCASE("agreement scales by the weight sum of the two sources") {
        const auto dl = StateDistribution::one_hot(5, 2);
        const auto scores = fuse_dl_pose(dl, dl, w);
        CHECK(scores[2] == doctest::Approx(w.w_dl + w.w_p));
        for (int i : {0, 1, 3, 4}) CHECK(scores[i] == 0.0);
    }

    SUBCASE("zero detector weight leaves only the pose source") {
        w.w_dl = 0.0;
        w.w_p = 0.7;
        const auto scores = fuse_dl_pose(dist({0.1, 0.9}), dist({0.3, 0.7}), w);
        CHECK(scores[0] == doctest::Approx(0.7 * 0.3));
        CHECK(scores[1] == doctest::Approx(0.7 * 0.7));
    }

    SUBCASE("unit-weight blend of two binary distributions") {
        w = {1.0, 1.0, 0.0, 0.25};
        const auto scores = fuse_dl_pose(dist({0.6, 0.4}), dist({0.2, 0.8}), w);
        CHECK(scores[0] == doctest::Approx(0.8));
        CHECK(scores[1] == doctest::Approx(1.2));
    }

    SUBCASE("length mismatch is rejected") {
        CHECK_THROWS_AS(fuse_dl_pose(dist({1.0}), dist({0.5, 0.5}), w), Error);
    }
}

TEST_CASE("temporal_term spreads history to neighbors") {
    const auto g = chain_graph(6);
    FusionWeights w{1.0, 1.0, 1.0, 1.0};

    SUBCASE("one-hot history") {
        FusionState prev;
        prev.previous_final = StateDistribution::one_hot(6, 3);
        const auto scores = temporal_term(prev, g, w);
        CHECK(scores[3] == doctest::Approx(1.0));
        CHECK(scores[2] == doctest::Approx(0.5));
        CHECK(scores[4] == doctest::Approx(0.5));
        CHECK(scores[0] == 0.0);
        CHECK(scores[1] == 0.0);
        CHECK(scores[5] == 0.0);
    }

    SUBCASE("zero history weights give zero scores") {
        w.w_f = 0.0;
        w.w_f1 = 0.0;
        FusionState prev;
        prev.previous_final = StateDistribution::one_hot(6, 3);
        for (double s : temporal_term(prev, g, w)) CHECK(s == 0.0);
    }

    SUBCASE("uniform history stays uniform on interior states") {
        FusionState prev = FusionState::initial(6);
        const auto scores = temporal_term(prev, g, w);
        for (int s = 1; s < 5; ++s) CHECK(scores[s] == doctest::Approx((w.w_f + w.w_f1) / 6.0));
    }
}

TEST_CASE("pose2state fuses agreement and disagreement as expected") {
    const auto g = chain_graph(5);
    const FusionWeights unit{1.0, 1.0, 1.0, 1.0};

    SUBCASE("unanimous sources produce that exact state") {
        FusionState prev;
        prev.previous_final = StateDistribution::one_hot(5, 2);
        const auto res = pose2state(StateDistribution::one_hot(5, 2),
                                    StateDistribution::one_hot(5, 2), prev, g, unit);
        CHECK(res.chosen_state == 2);
        CHECK_FALSE(res.degenerate);
        CHECK(res.distribution.p[2] > 0.6);
    }

    SUBCASE("pose and history outvote the detector") {
        FusionState prev;
        prev.previous_final = StateDistribution::one_hot(5, 3);
        const auto res = pose2state(StateDistribution::one_hot(5, 2),
                                    StateDistribution::one_hot(5, 3), prev, g, unit);
        CHECK(res.chosen_state == 3);
    }

    SUBCASE("detector-only weights reproduce the detector argmax") {
        const FusionWeights dl_only{1.0, 0.0, 0.0, 0.0};
        FusionState prev;
        prev.previous_final = StateDistribution::one_hot(5, 4);
        const auto dl = dist({0.1, 0.5, 0.2, 0.1, 0.1});
        const auto res = pose2state(dl, StateDistribution::one_hot(5, 4), prev, g, dl_only);
        CHECK(res.chosen_state == 1);
        for (int i = 0; i < 5; ++i) CHECK(res.distribution.p[i] == doctest::Approx(dl.p[i]));
    }

    SUBCASE("all-zero evidence degenerates to flagged uniform") {
        FusionState prev;
        prev.previous_final = dist({0, 0, 0, 0, 0});
        const auto res =
            pose2state(dist({0, 0, 0, 0, 0}), dist({0, 0, 0, 0, 0}), prev, g, unit);
        CHECK(res.degenerate);
        for (double v : res.distribution.p) CHECK(v == doctest::Approx(0.2));
        CHECK(res.chosen_state == 0);
    }
}

TEST_CASE("one-frame detector glitch does not flip the smoothed state") {
    const auto g = chain_graph(6);
    const FusionWeights unit{1.0, 1.0, 1.0, 1.0};
    FusionState prev;
    prev.previous_final = StateDistribution::one_hot(6, 2);
    // detector fires on a non-neighbor state for a single frame
    const auto res = pose2state(StateDistribution::one_hot(6, 5),
                                StateDistribution::one_hot(6, 2), prev, g, unit);
    CHECK(res.chosen_state == 2);
}

TEST_CASE("argmax is invariant to a common positive weight scale") {
    const auto g = chain_graph(7);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_dist = [&](int n) {
        StateDistribution d;
        d.p.resize(n);
        for (auto& v : d.p) v = u(rng);
        d.normalize();
        return d;
    };
    for (int trial = 0; trial < 300; ++trial) {
        const auto dl = random_dist(7);
        const auto pose = random_dist(7);
        FusionState prev;
        prev.previous_final = random_dist(7);
        const FusionWeights base{u(rng) + 0.1, u(rng) + 0.1, u(rng), u(rng)};
        const double c = 0.01 + 100.0 * u(rng);
        const FusionWeights scaled{c * base.w_dl, c * base.w_p, c * base.w_f, c * base.w_f1};

        const auto a = pose2state(dl, pose, prev, g, base);
        const auto b = pose2state(dl, pose, prev, g, scaled);
        CHECK(a.chosen_state == b.chosen_state);
        for (int i = 0; i < 7; ++i)
            CHECK(a.distribution.p[i] == doctest::Approx(b.distribution.p[i]).epsilon(1e-9));
    }
}

TEST_CASE("fused support stays within the evidence support") {
    const auto g = chain_graph(8);
    const FusionWeights unit{1.0, 1.0, 1.0, 1.0};
    FusionState prev;
    prev.previous_final = StateDistribution::one_hot(8, 4);
    const auto res = pose2state(StateDistribution::one_hot(8, 1),
                                StateDistribution::one_hot(8, 2), prev, g, unit);
    std::set<int> allowed = {1, 2, 4, 3, 5};  // sources plus neighbors of the history mass
    for (int i = 0; i < 8; ++i)
        if (!allowed.count(i)) CHECK(res.distribution.p[i] == 0.0);
    CHECK(res.distribution.sum() == doctest::Approx(1.0));
}

TEST_CASE("advance threads fused output into the next prior") {
    const auto g = chain_graph(4);
    FusionState s = FusionState::initial(4);
    CHECK(s.frame_index == 0);
    const auto res = pose2state(StateDistribution::one_hot(4, 1),
                                StateDistribution::one_hot(4, 1), s, g, {});
    s = advance(s, res);
    CHECK(s.frame_index == 1);
    CHECK(s.previous_argmax == 1);
    CHECK(s.previous_final.p[1] > 0.5);
}

TEST_CASE("weight validation") {
    FusionWeights w{0, 0, 0, 0};
    CHECK_THROWS_AS(w.validate(), Error);
    FusionWeights neg{1, -0.1, 0, 0};
    CHECK_THROWS_AS(neg.validate(), Error);
}

TEST_SUITE_END();
