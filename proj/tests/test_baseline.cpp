#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedrl/baseline.hpp"
#include "fedrl/harness.hpp"

using namespace fedrl;

TEST_CASE("trivial MDP has no regret") {
    RunConfig c;
    c.H = 3;
    c.S = 1;
    c.A = 1;
    c.T0 = 3 * 500;
    c.algorithm = Algorithm::hoeffding_baseline;
    for (int M : {1, 3}) {
        c.M = M;
        c.T0 = RunConfig::budget_for(3, M, 500);
        const auto m = run(c);
        CHECK(m.regret == 0.0);
        CHECK(m.episodes_per_agent() >= 500);
    }
}

TEST_CASE("single-agent estimates stay in [0, H]") {
    const auto mdp = generate_random_mdp(4, 3, 2, 6);
    HoeffdingSingle learner(4, 3, 2, {}, 1.0);
    Rng rng(5);
    for (int i = 0; i < 5000; ++i) {
        learner.run_episode(mdp, rng, {});
        for (double q : learner.state().q) {
            CHECK(q >= 0.0);
            CHECK(q <= 4.0);
        }
    }
    std::int64_t visits = 0;
    for (auto n : learner.state().visits) visits += n;
    CHECK(visits == 5000 * 4);
}

TEST_CASE("federated baseline rounds") {
    const auto mdp = generate_random_mdp(4, 3, 2, 6);
    HoeffdingFederated learner(4, 3, 2, 3, {}, 1.0);
    std::int64_t episodes = 0;
    for (int k = 1; k <= 200; ++k) {
        const auto n = learner.run_round(mdp, 17, k, {});
        CHECK(n >= 1);
        episodes += n;
        for (double q : learner.state().q) {
            CHECK(q >= 0.0);
            CHECK(q <= 4.0);
        }
    }
    std::int64_t visits = 0;
    for (auto x : learner.state().visits) visits += x;
    CHECK(visits == episodes * 3 * 4);
    CHECK(learner.ledger().rounds == 200);
    CHECK(learner.ledger().total() == 200 * (6 * 3 * 4 * 3 + 4));
}

TEST_CASE("baseline first round mirrors the main machine's exploration") {
    // With the same round-1 policy, both machines draw the same episodes.
    const auto mdp = generate_random_mdp(3, 2, 2, 4);
    std::vector<int> a, b;
    HoeffdingFederated base(3, 2, 2, 2, {}, 1.0);
    FederatedEslc fed(3, 2, 2, 2, {}, 1.0);
    base.run_round(mdp, 9, 1, {}, [&](int, const Trajectory& t) { a.push_back(t.initial_state); });
    fed.run_round(mdp, 9, {}, [&](int, const Trajectory& t) { b.push_back(t.initial_state); });
    CHECK(a == b);
}
