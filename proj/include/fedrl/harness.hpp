#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedrl/fedq.hpp"
#include "fedrl/mdp.hpp"
#include "fedrl/oracle.hpp"
#include "fedrl/schedule.hpp"

namespace fedrl {

inline constexpr const char* kVersion = "fedrl-0.1.0";

enum class Algorithm { fedq_eslc, single_eslc, hoeffding_baseline };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct IotaMode {
    bool theory = false;
    double value = 1.0;  // fixed mode
    double p = 0.05;     // theory mode failure rate
};

struct RunConfig {
    int H = 5, S = 3, A = 2, M = 1;
    std::int64_t T0 = 5 * 1000;  // total on-server steps across all agents
    std::uint64_t seed = 1;      // master seed: MDP and episode streams derive from it
    std::int64_t replication = 0;
    BonusConstants constants;
    IotaMode iota;
    Algorithm algorithm = Algorithm::fedq_eslc;
    InitialStateRule initial_state;

    void validate() const;  // throws std::invalid_argument
    double resolved_iota() const;
    std::uint64_t run_seed() const;
    // T0 for a budget of `episodes` per agent.
    static std::int64_t budget_for(int H, int M, std::int64_t episodes) { return episodes * H * M; }
};

struct RoundRecord {
    std::int64_t round = 0;
    std::int64_t episodes_per_agent = 0;   // n^k
    std::int64_t cumulative_episodes = 0;  // across all agents
    double regret = 0.0;
    double cumulative_regret = 0.0;
    bool policy_changed = false;  // this round's policy differs from the previous round's
    std::int64_t cumulative_switches = 0;
    std::int64_t cumulative_scalars = 0;
};

struct RunMetrics {
    RunConfig config;
    std::vector<RoundRecord> rounds;
    // Cumulative regret after each per-agent episode index (one lockstep sweep).
    std::vector<double> regret_by_episode;
    std::int64_t K = 0;
    double T = 0.0;  // average steps per agent
    double regret = 0.0;
    std::int64_t switching_cost = 0;
    std::int64_t scalars = 0;
    std::vector<std::string> anomalies;

    std::int64_t episodes_per_agent() const { return static_cast<std::int64_t>(regret_by_episode.size()); }
};

// Per-round view for invariant checks; `outcome` is null for the
// single-agent specialization.
struct RoundObservation {
    const ServerState& before;
    const ServerState& after;
    const RoundOutcome* outcome;
    std::int64_t episodes_per_agent;
};

struct RunHooks {
    std::function<void(ServerState&)> prepare;  // applied to the initial server state
    std::function<void(const RoundObservation&)> on_round;
    TieBreak tie_break = TieBreak::lowest_index;  // single-agent specialization only
};

RunMetrics run(const RunConfig& config, const RunHooks& hooks = {});
RunMetrics run(const RunConfig& config, const TabularMdp& mdp, const OracleTables& oracle, const RunHooks& hooks = {});

struct BoundReport {
    double C_tilde = 0.0;
    double T = 0.0;
    double rounds_bound = 0.0;
    std::int64_t rounds = 0;
    bool rounds_ok = true;
    bool switching_checked = false;  // only for M = 1
    double switching_bound = 0.0;
    std::int64_t switching = 0;
    bool switching_ok = true;
    bool ok() const { return rounds_ok && switching_ok; }
};

// max{2 M C + 4 M C log(T / C), 3 M C} with C = H^2 (H+1) S A.
double rounds_bound(int H, int S, int A, int M, double T);
BoundReport theorem_bound_check(const RunMetrics& metrics);

struct Percentiles {
    double p10 = 0.0, p50 = 0.0, p90 = 0.0, mean = 0.0;
};

// Linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);
Percentiles summarize(const std::vector<double>& values);

struct EnsemblePoint {
    std::int64_t episodes = 0;  // per agent
    Percentiles regret;
    Percentiles regret_over_log;  // Regret / log(episodes + 1)
};

struct EnsembleSummary {
    Algorithm algorithm = Algorithm::fedq_eslc;
    std::vector<EnsemblePoint> points;
    Percentiles final_regret;
    Percentiles rounds;
    Percentiles switching;
};

EnsembleSummary summarize_ensemble(const std::vector<RunMetrics>& runs, int grid_points = 200);

// Runs replications 0..n-1 of `config` (episode streams vary, MDP shared)
// on up to `workers` threads.
std::vector<RunMetrics> replicate_runs(const RunConfig& config, int n_replications, int workers = 1);
std::vector<RunMetrics> replicate_runs(const RunConfig& config, const TabularMdp& mdp, const OracleTables& oracle,
                                       int n_replications, int workers = 1);
EnsembleSummary replicate(const RunConfig& config, int n_replications, int workers = 1, int grid_points = 200);

// Worker count from FEDRL_WORKERS, defaulting to 1.
int workers_from_env();

// One CSV row per round; the first line is a comment carrying the config.
std::string rounds_csv(const RunMetrics& metrics);
std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);
std::string ensemble_to_json(const EnsembleSummary& summary, const RunConfig& config);
// Columns: episodes,regret_over_log,p10,p50,p90 (regret_over_log is the mean).
std::string figure_csv(const EnsembleSummary& summary, const RunConfig& config);

}  // namespace fedrl
