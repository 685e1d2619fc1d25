#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedrl/harness.hpp"

namespace fedrl {

// Exact per-round checks of the server state machine. Feed it every
// RoundObservation of a run; violations accumulate in `failures`.
class InvariantChecker {
public:
    explicit InvariantChecker(int M) : M_(M) {}

    void observe(const RoundObservation& obs);

    bool ok() const { return failures_.empty(); }
    const std::vector<std::string>& failures() const { return failures_; }
    std::int64_t rounds_checked() const { return rounds_; }

private:
    void fail(std::int64_t round, const std::string& what);

    int M_;
    std::int64_t rounds_ = 0;
    std::vector<std::string> failures_;
};

// Brute-force optimum over all A^(H*S) deterministic policies, each
// evaluated by its own backward recursion. Exponential; tiny instances only.
std::vector<double> enumerate_best_values(const TabularMdp& mdp);

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    RunConfig base;  // dimensions, seed and constants for the run-based properties
    int seeds = 5;
    std::int64_t episodes = 1000;  // per agent, for run-based properties
    TieBreak single_tie_break = TieBreak::lowest_index;  // mutation hook for the M=1 reduction
};

std::vector<PropertyResult> run_property_suite(const VerifyOptions& options);

// Federated machine with M = 1 vs. the single-agent specialization, compared
// bit for bit after every round. Returns the first mismatching round, or 0.
std::int64_t first_reduction_mismatch(const RunConfig& config, TieBreak single_tie_break = TieBreak::lowest_index);

}  // namespace fedrl
