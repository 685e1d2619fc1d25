#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedrl/mdp.hpp"
#include "fedrl/rng.hpp"
#include "fedrl/schedule.hpp"

namespace fedrl {

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TieBreak { lowest_index, highest_index };

// Server-side estimates of the early-settled, low-switching Q-learning
// machine. Per-(h,s,a) tables are laid out [h][s][a]; per-(h,s) tables [h][s].
struct ServerState {
    int H = 0, S = 0, A = 0;
    std::int64_t round = 1;

    std::vector<double> q_upper;
    std::vector<double> q_lower;
    std::vector<double> q_ref;
    std::vector<double> q;
    std::vector<std::int64_t> visits;
    std::vector<double> mu_ref;     // historical mean of V^R at next states
    std::vector<double> sigma_ref;  // historical mean of (V^R)^2
    std::vector<double> mu_adv;     // weighted mean of V - V^R
    std::vector<double> sigma_adv;  // weighted mean of (V - V^R)^2
    std::vector<double> beta_ref;   // reference bonus coefficient of the last update

    std::vector<double> v;
    std::vector<double> v_lower;
    std::vector<double> v_ref;
    std::vector<std::uint8_t> ref_unsettled;
    DeterministicPolicy policy;

    static ServerState initial(int H, int S, int A);

    std::size_t sa(int h, int s, int a) const { return (static_cast<std::size_t>(h) * S + s) * A + a; }
    std::size_t hs(int h, int s) const { return static_cast<std::size_t>(h) * S + s; }

    std::int64_t total_visits() const;

    // Test hook: start from a given Q table (Q^U = Q^R = Q = table, V = max,
    // V^R = V, greedy policy). Lower estimates stay at zero.
    void seed_q(const std::vector<double>& table);
};

// Compares every field bit for bit (distinguishes -0.0 from 0.0).
bool bitwise_equal(const ServerState& a, const ServerState& b);

struct RoundBroadcast {
    std::int64_t round = 1;
    DeterministicPolicy policy;
    std::vector<std::int64_t> visits_on_policy;  // N_h(s, pi_h(s))
    std::vector<double> v;
    std::vector<double> v_lower;
    std::vector<double> v_ref;
};

RoundBroadcast make_broadcast(const ServerState& server);

// max{1, floor(N / (M H (H+1)))}
std::int64_t visit_cap(std::int64_t N, int M, int H);

// Raw local sums of one agent at one (h,s) for the broadcast action.
struct ReportEntry {
    int action = 0;
    double reward = 0.0;
    std::int64_t n = 0;
    double v = 0.0;
    double v_lower = 0.0;
    double mu_r = 0.0;
    double sigma_r = 0.0;
    double mu_a = 0.0;
    double sigma_a = 0.0;
};

struct AgentRoundReport {
    int agent = 0;
    std::int64_t round = 0;
    int H = 0, S = 0;
    std::vector<ReportEntry> entries;  // [h][s]

    const ReportEntry& at(int h, int s) const { return entries[static_cast<std::size_t>(h) * S + s]; }
    ReportEntry& at(int h, int s) { return entries[static_cast<std::size_t>(h) * S + s]; }
};

struct InitialStateRule {
    bool fixed = false;
    int state = 0;

    int draw(int S, Rng& rng) const { return fixed ? state : sample_initial_state(S, rng); }
};

using EpisodeObserver = std::function<void(int agent, const Trajectory&)>;

struct ExplorationResult {
    std::vector<AgentRoundReport> reports;
    std::int64_t episodes_per_agent = 0;
};

// All agents run one episode per sweep; after each sweep the trigger is
// checked, and exploration stops once some agent's on-policy count reached
// its cap. `rngs` holds one stream per agent.
ExplorationResult agent_explore_lockstep(const TabularMdp& mdp, const RoundBroadcast& broadcast, int M,
                                         std::span<Rng> rngs, const InitialStateRule& init,
                                         const EpisodeObserver& observer = {});

// Folds the agents' reports into the server state of the next round.
// Throws ProtocolError on reports that do not match the broadcast.
ServerState aggregate_round(const ServerState& server, const std::vector<AgentRoundReport>& reports, int M,
                            const BonusConstants& constants, double iota);

// Scalars exchanged in one round.
struct RoundCost {
    std::int64_t downlink = 0;  // 5 per (h,s) per agent
    std::int64_t uplink = 0;    // 8 per (h,s) per agent
    std::int64_t signals = 0;   // one abortion signal in, one relayed to each agent
    std::int64_t total() const { return downlink + uplink + signals; }
};

RoundCost round_communication(int M, int H, int S);

struct CommunicationLedger {
    std::int64_t rounds = 0;
    std::int64_t downlink = 0;
    std::int64_t uplink = 0;
    std::int64_t signals = 0;

    void record(const RoundCost& cost);
    std::int64_t total() const { return downlink + uplink + signals; }
};

namespace kernel {

// Local sums contributed by one visit (Case 1: one agent, one visit).
struct VisitSums {
    double v = 0.0, v_lower = 0.0, mu_r = 0.0, sigma_r = 0.0, mu_a = 0.0, sigma_a = 0.0;
};

struct TripleRound {
    std::int64_t n = 0;
    double reward = 0.0;
    VisitSums sums;                         // summed over agents
    std::vector<VisitSums> single_visits;   // ascending agent order; required below i0
};

// Adds one observed next state to an agent's running sums.
void accumulate_next_state(ReportEntry& entry, int h, int next_state, int H, std::span<const double> v,
                           std::span<const double> v_lower, std::span<const double> v_ref, int S);

// One (s,a,h) update: global means, learning rate, the i0 case split, both
// bonuses, and the running min over Q estimates.
void update_triple(ServerState& state, std::size_t idx, const TripleRound& data, int M,
                   const BonusConstants& constants, double iota);

// V, V^L, greedy policy and reference settlement for every (h,s); advances the round.
void finish_round(ServerState& state, double beta, TieBreak tie_break);

}  // namespace kernel

struct RoundOutcome {
    std::int64_t episodes_per_agent = 0;
    RoundBroadcast broadcast;
    std::vector<AgentRoundReport> reports;
};

// Federated machine: server plus M agents exchanging broadcasts and reports.
class FederatedEslc {
public:
    FederatedEslc(int H, int S, int A, int M, BonusConstants constants, double iota);

    RoundOutcome run_round(const TabularMdp& mdp, std::uint64_t run_seed, const InitialStateRule& init,
                           const EpisodeObserver& observer = {});

    const ServerState& state() const { return state_; }
    ServerState& mutable_state() { return state_; }
    const CommunicationLedger& ledger() const { return ledger_; }
    int agents() const { return M_; }

private:
    int M_;
    BonusConstants constants_;
    double iota_;
    ServerState state_;
    CommunicationLedger ledger_;
};

// The same machine with one agent, run without broadcast or report objects:
// exploration reads the value tables directly.
class SingleAgentEslc {
public:
    SingleAgentEslc(int H, int S, int A, BonusConstants constants, double iota,
                    TieBreak tie_break = TieBreak::lowest_index);

    // Returns the number of episodes run in the round.
    std::int64_t run_round(const TabularMdp& mdp, std::uint64_t run_seed, const InitialStateRule& init,
                           const EpisodeObserver& observer = {});

    const ServerState& state() const { return state_; }
    ServerState& mutable_state() { return state_; }

private:
    BonusConstants constants_;
    double iota_;
    TieBreak tie_break_;
    ServerState state_;
};

std::string checkpoint_to_json(const ServerState& state, std::uint64_t master_seed);
ServerState checkpoint_from_json(const std::string& text, std::uint64_t* master_seed = nullptr);

}  // namespace fedrl
