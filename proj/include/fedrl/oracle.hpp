#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedrl/mdp.hpp"

namespace fedrl {

// Value tables indexed like the MDP: [h][s] for V, [h][s][a] for Q.
struct OptimalValues {
    std::vector<double> V;  // H*S
    std::vector<double> Q;  // H*S*A
};

struct GapQuantities {
    std::vector<double> gaps;         // H*S*A, V*_h(s) - Q*_h(s,a)
    std::optional<double> delta_min;  // empty when no gap is positive (degenerate MDP)
    bool degenerate() const { return !delta_min.has_value(); }
};

struct OptimalActionSite {
    int h = 0;
    int s = 0;
    std::vector<int> actions;
    double visit_probability = 0.0;
};

struct GmdpStatistics {
    std::vector<double> Pstar;        // H*S, visitation under the canonical optimal policy
    std::optional<double> C_st;       // min positive Pstar entry
    std::vector<OptimalActionSite> multiple_optima;  // every (h,s) with more than one optimal action
    bool support_has_multiple_optima = false;         // some such (h,s) has Pstar > 0
    static constexpr const char* kUniquenessScope = "checked under canonical policy only";
};

struct OracleTables {
    int H = 0, S = 0, A = 0;
    std::vector<double> Vstar;
    std::vector<double> Qstar;
    std::vector<double> gaps;
    std::optional<double> delta_min;
    double Qvar_max = 0.0;
    std::vector<double> Pstar;
    std::optional<double> C_st;
    std::vector<std::vector<int>> optimal_action_sets;  // H*S
    std::vector<OptimalActionSite> multiple_optima;
    bool support_has_multiple_optima = false;

    bool degenerate() const { return !delta_min.has_value(); }
    double vstar(int h, int s) const { return Vstar[static_cast<std::size_t>(h) * S + s]; }
    double qstar(int h, int s, int a) const { return Qstar[(static_cast<std::size_t>(h) * S + s) * A + a]; }
    double gap(int h, int s, int a) const { return gaps[(static_cast<std::size_t>(h) * S + s) * A + a]; }
    double pstar(int h, int s) const { return Pstar[static_cast<std::size_t>(h) * S + s]; }
};

// Backward induction from V*_{H+1} = 0.
OptimalValues optimal_values(const TabularMdp& mdp);

std::vector<double> evaluate_policy(const TabularMdp& mdp, const DeterministicPolicy& policy);

// Lowest-index argmax of Q at every (h,s).
DeterministicPolicy greedy_policy(const std::vector<double>& Q, int H, int S, int A);

GapQuantities gap_quantities(const TabularMdp& mdp, const OptimalValues& values);

// max over (s,a,h) of Var_{s' ~ P_h(.|s,a)} V*_{h+1}(s').
double max_conditional_variance(const TabularMdp& mdp, const std::vector<double>& Vstar);

// Forward propagation from the uniform initial distribution.
std::vector<double> visitation_probabilities(const TabularMdp& mdp, const DeterministicPolicy& policy);

GmdpStatistics gmdp_statistics(const TabularMdp& mdp, const OptimalValues& values, const GapQuantities& gaps);

OracleTables compute_oracle(const TabularMdp& mdp);

// Cache document; carries the MDP content hash it was computed from.
std::string oracle_to_json(const OracleTables& tables, std::uint64_t mdp_hash);
// Returns nothing when the document's hash does not match `mdp_hash`.
std::optional<OracleTables> oracle_from_json(const std::string& text, std::uint64_t mdp_hash);

}  // namespace fedrl
