#pragma once

#include <cstdint>
#include <vector>

#include "fedrl/fedq.hpp"
#include "fedrl/mdp.hpp"
#include "fedrl/schedule.hpp"

namespace fedrl {

// UCB-Hoeffding Q-learning state. Q is clipped at H after each update, so
// V = min{H, max_a Q} reduces to max_a Q.
struct HoeffdingState {
    int H = 0, S = 0, A = 0;
    std::vector<double> q;
    std::vector<std::int64_t> visits;
    std::vector<double> v;
    DeterministicPolicy policy;

    static HoeffdingState initial(int H, int S, int A);

    std::size_t sa(int h, int s, int a) const { return (static_cast<std::size_t>(h) * S + s) * A + a; }
    std::size_t hs(int h, int s) const { return static_cast<std::size_t>(h) * S + s; }

    // Recomputes V and the greedy policy at (h,s).
    void refresh(int h, int s);
};

// Per-episode learner: the policy may change after every episode.
class HoeffdingSingle {
public:
    HoeffdingSingle(int H, int S, int A, BonusConstants constants, double iota);

    Trajectory run_episode(const TabularMdp& mdp, Rng& rng, const InitialStateRule& init);

    const HoeffdingState& state() const { return state_; }

private:
    BonusConstants constants_;
    double iota_;
    HoeffdingState state_;
};

// Round-based analogue sharing the trigger and i0 split of the main machine,
// keeping only the optimistic estimate.
class HoeffdingFederated {
public:
    HoeffdingFederated(int H, int S, int A, int M, BonusConstants constants, double iota);

    // Returns episodes per agent in the round.
    std::int64_t run_round(const TabularMdp& mdp, std::uint64_t run_seed, std::int64_t round,
                           const InitialStateRule& init, const EpisodeObserver& observer = {});

    const HoeffdingState& state() const { return state_; }
    const CommunicationLedger& ledger() const { return ledger_; }

private:
    int M_;
    BonusConstants constants_;
    double iota_;
    HoeffdingState state_;
    CommunicationLedger ledger_;
};

}  // namespace fedrl
