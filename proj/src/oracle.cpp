#include "fedrl/oracle.hpp"

#include <algorithm>
#include <limits>

#include "json.hpp"

namespace fedrl {

namespace {

std::size_t hs(int h, int s, int S) { return static_cast<std::size_t>(h) * S + s; }

// Expectation of the next-step table `next` (S entries, or none after the last step).
double expect_next(const TabularMdp& mdp, int h, int s, int a, const std::vector<double>& V) {
    if (h + 1 >= mdp.H()) return 0.0;
    const auto row = mdp.transition(h, s, a);
    const double* next = V.data() + hs(h + 1, 0, mdp.S());
    double total = 0.0;
    for (int s2 = 0; s2 < mdp.S(); ++s2) total += row[s2] * next[s2];
    return total;
}

}  // namespace

OptimalValues optimal_values(const TabularMdp& mdp) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A();
    OptimalValues out;
    out.V.assign(static_cast<std::size_t>(H) * S, 0.0);
    out.Q.assign(static_cast<std::size_t>(H) * S * A, 0.0);
    for (int h = H - 1; h >= 0; --h) {
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                const double q = mdp.reward(h, s, a) + expect_next(mdp, h, s, a, out.V);
                out.Q[mdp.sa_index(h, s, a)] = q;
                best = std::max(best, q);
            }
            out.V[hs(h, s, S)] = best;
        }
    }
    return out;
}

std::vector<double> evaluate_policy(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    const int H = mdp.H(), S = mdp.S();
    std::vector<double> V(static_cast<std::size_t>(H) * S, 0.0);
    for (int h = H - 1; h >= 0; --h)
        for (int s = 0; s < S; ++s) {
            const int a = policy(h, s);
            V[hs(h, s, S)] = mdp.reward(h, s, a) + expect_next(mdp, h, s, a, V);
        }
    return V;
}

DeterministicPolicy greedy_policy(const std::vector<double>& Q, int H, int S, int A) {
    DeterministicPolicy pi(H, S);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            const double* row = Q.data() + hs(h, s, S) * A;
            int best = 0;
            for (int a = 1; a < A; ++a)
                if (row[a] > row[best]) best = a;
            pi.set(h, s, best);
        }
    return pi;
}

GapQuantities gap_quantities(const TabularMdp& mdp, const OptimalValues& values) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A();
    GapQuantities out;
    out.gaps.resize(values.Q.size());
    double smallest = std::numeric_limits<double>::infinity();
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const std::size_t i = mdp.sa_index(h, s, a);
                const double g = values.V[hs(h, s, S)] - values.Q[i];
                out.gaps[i] = g;
                if (g > 0.0) smallest = std::min(smallest, g);
            }
    if (smallest < std::numeric_limits<double>::infinity()) out.delta_min = smallest;
    return out;
}

double max_conditional_variance(const TabularMdp& mdp, const std::vector<double>& Vstar) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A();
    double worst = 0.0;
    for (int h = 0; h + 1 < H; ++h) {
        const double* next = Vstar.data() + hs(h + 1, 0, S);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const auto row = mdp.transition(h, s, a);
                double mean = 0.0, second = 0.0;
                for (int s2 = 0; s2 < S; ++s2) {
                    mean += row[s2] * next[s2];
                    second += row[s2] * next[s2] * next[s2];
                }
                worst = std::max(worst, second - mean * mean);
            }
    }
    // The last step has V*_{H+1} = 0, hence zero variance.
    return worst;
}

std::vector<double> visitation_probabilities(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    const int H = mdp.H(), S = mdp.S();
    std::vector<double> P(static_cast<std::size_t>(H) * S, 0.0);
    for (int s = 0; s < S; ++s) P[hs(0, s, S)] = 1.0 / S;
    for (int h = 0; h + 1 < H; ++h)
        for (int s = 0; s < S; ++s) {
            const double mass = P[hs(h, s, S)];
            if (mass == 0.0) continue;
            const auto row = mdp.transition(h, s, policy(h, s));
            for (int s2 = 0; s2 < S; ++s2) P[hs(h + 1, s2, S)] += mass * row[s2];
        }
    return P;
}

GmdpStatistics gmdp_statistics(const TabularMdp& mdp, const OptimalValues& values, const GapQuantities& gaps) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A();
    GmdpStatistics out;
    out.Pstar = visitation_probabilities(mdp, greedy_policy(values.Q, H, S, A));
    double smallest = std::numeric_limits<double>::infinity();
    for (double p : out.Pstar)
        if (p > 0.0) smallest = std::min(smallest, p);
    if (smallest < std::numeric_limits<double>::infinity()) out.C_st = smallest;
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            std::vector<int> optimal;
            for (int a = 0; a < A; ++a)
                if (gaps.gaps[mdp.sa_index(h, s, a)] == 0.0) optimal.push_back(a);
            if (optimal.size() > 1) {
                const double p = out.Pstar[hs(h, s, S)];
                out.multiple_optima.push_back({h, s, std::move(optimal), p});
                if (p > 0.0) out.support_has_multiple_optima = true;
            }
        }
    return out;
}

OracleTables compute_oracle(const TabularMdp& mdp) {
    const auto values = optimal_values(mdp);
    const auto gaps = gap_quantities(mdp, values);
    auto gmdp = gmdp_statistics(mdp, values, gaps);

    OracleTables t;
    t.H = mdp.H();
    t.S = mdp.S();
    t.A = mdp.A();
    t.Vstar = values.V;
    t.Qstar = values.Q;
    t.gaps = gaps.gaps;
    t.delta_min = gaps.delta_min;
    t.Qvar_max = max_conditional_variance(mdp, values.V);
    t.Pstar = std::move(gmdp.Pstar);
    t.C_st = gmdp.C_st;
    t.multiple_optima = std::move(gmdp.multiple_optima);
    t.support_has_multiple_optima = gmdp.support_has_multiple_optima;
    t.optimal_action_sets.resize(static_cast<std::size_t>(t.H) * t.S);
    for (int h = 0; h < t.H; ++h)
        for (int s = 0; s < t.S; ++s)
            for (int a = 0; a < t.A; ++a)
                if (t.gap(h, s, a) == 0.0) t.optimal_action_sets[hs(h, s, t.S)].push_back(a);
    return t;
}

std::string oracle_to_json(const OracleTables& t, std::uint64_t mdp_hash) {
    nlohmann::json doc;
    doc["mdp_hash"] = mdp_hash;
    doc["H"] = t.H;
    doc["S"] = t.S;
    doc["A"] = t.A;
    doc["Vstar"] = t.Vstar;
    doc["Qstar"] = t.Qstar;
    doc["gaps"] = t.gaps;
    doc["delta_min"] = t.delta_min ? nlohmann::json(*t.delta_min) : nlohmann::json(nullptr);
    doc["degenerate"] = !t.delta_min.has_value();
    doc["Qvar_max"] = t.Qvar_max;
    doc["Pstar"] = t.Pstar;
    doc["C_st"] = t.C_st ? nlohmann::json(*t.C_st) : nlohmann::json(nullptr);
    doc["optimal_action_sets"] = t.optimal_action_sets;
    auto sites = nlohmann::json::array();
    for (const auto& site : t.multiple_optima)
        sites.push_back({{"h", site.h}, {"s", site.s}, {"actions", site.actions},
                         {"visit_probability", site.visit_probability}});
    doc["multiple_optima"] = std::move(sites);
    doc["support_has_multiple_optima"] = t.support_has_multiple_optima;
    doc["uniqueness_scope"] = GmdpStatistics::kUniquenessScope;
    return doc.dump(1) + "\n";
}

std::optional<OracleTables> oracle_from_json(const std::string& text, std::uint64_t mdp_hash) {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("mdp_hash").get<std::uint64_t>() != mdp_hash) return std::nullopt;
    OracleTables t;
    t.H = doc.at("H");
    t.S = doc.at("S");
    t.A = doc.at("A");
    t.Vstar = doc.at("Vstar").get<std::vector<double>>();
    t.Qstar = doc.at("Qstar").get<std::vector<double>>();
    t.gaps = doc.at("gaps").get<std::vector<double>>();
    if (!doc.at("delta_min").is_null()) t.delta_min = doc.at("delta_min").get<double>();
    t.Qvar_max = doc.at("Qvar_max");
    t.Pstar = doc.at("Pstar").get<std::vector<double>>();
    if (!doc.at("C_st").is_null()) t.C_st = doc.at("C_st").get<double>();
    t.optimal_action_sets = doc.at("optimal_action_sets").get<std::vector<std::vector<int>>>();
    for (const auto& site : doc.at("multiple_optima"))
        t.multiple_optima.push_back({site.at("h"), site.at("s"), site.at("actions").get<std::vector<int>>(),
                                     site.at("visit_probability")});
    t.support_has_multiple_optima = doc.at("support_has_multiple_optima");
    return t;
}

}  // namespace fedrl
