#include "fedrl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fedrl/oracle.hpp"

namespace fedrl {

void InvariantChecker::fail(std::int64_t round, const std::string& what) {
    if (failures_.size() < 64) failures_.push_back("round " + std::to_string(round) + ": " + what);
}

void InvariantChecker::observe(const RoundObservation& obs) {
    const ServerState& b = obs.before;
    const ServerState& a = obs.after;
    const std::int64_t k = b.round;
    ++rounds_;

    for (std::size_t i = 0; i < a.q.size(); ++i)
        if (a.q[i] > b.q[i]) {
            fail(k, "Q increased");
            break;
        }
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        if (a.v_lower[i] < b.v_lower[i]) fail(k, "V_L decreased");
        if (a.v[i] - a.v_lower[i] > b.v[i] - b.v_lower[i]) fail(k, "V - V_L increased");
        if (!b.ref_unsettled[i] && (a.ref_unsettled[i] || a.v_ref[i] != b.v_ref[i]))
            fail(k, "settled reference changed");
    }

    // Unvisited triples keep every per-triple field.
    for (int h = 0; h < b.H; ++h)
        for (int s = 0; s < b.S; ++s)
            for (int act = 0; act < b.A; ++act) {
                const std::size_t i = b.sa(h, s, act);
                if (a.visits[i] != b.visits[i]) continue;
                if (a.q_upper[i] != b.q_upper[i] || a.q_lower[i] != b.q_lower[i] || a.q_ref[i] != b.q_ref[i] ||
                    a.q[i] != b.q[i] || a.mu_ref[i] != b.mu_ref[i] || a.sigma_ref[i] != b.sigma_ref[i] ||
                    a.mu_adv[i] != b.mu_adv[i] || a.sigma_adv[i] != b.sigma_adv[i] ||
                    a.beta_ref[i] != b.beta_ref[i])
                    fail(k, "unvisited triple changed");
            }

    // Trigger tightness: every local count within its cap, one at equality.
    bool hit = false;
    for (int h = 0; h < b.H; ++h)
        for (int s = 0; s < b.S; ++s) {
            const std::size_t idx = b.sa(h, s, b.policy(h, s));
            const std::int64_t cap = visit_cap(b.visits[idx], M_, b.H);
            if (obs.outcome) {
                for (const auto& rep : obs.outcome->reports) {
                    const std::int64_t n = rep.at(h, s).n;
                    if (n > cap) fail(k, "local count above cap");
                    if (n == cap) hit = true;
                }
            } else {
                const std::int64_t n = a.visits[idx] - b.visits[idx];
                if (n > cap) fail(k, "count above cap");
                if (n == cap) hit = true;
            }
        }
    if (!hit) fail(k, "trigger fired without any count reaching its cap");
}

std::vector<double> enumerate_best_values(const TabularMdp& mdp) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A();
    const int cells = H * S;
    std::vector<int> choice(static_cast<std::size_t>(cells), 0);
    std::vector<double> best(static_cast<std::size_t>(cells), -std::numeric_limits<double>::infinity());
    std::vector<double> value(static_cast<std::size_t>(cells));
    while (true) {
        for (int h = H - 1; h >= 0; --h)
            for (int s = 0; s < S; ++s) {
                const int act = choice[static_cast<std::size_t>(h * S + s)];
                double x = mdp.reward(h, s, act);
                if (h + 1 < H) {
                    const auto row = mdp.transition(h, s, act);
                    for (int s2 = 0; s2 < S; ++s2) x += row[s2] * value[static_cast<std::size_t>((h + 1) * S + s2)];
                }
                value[static_cast<std::size_t>(h * S + s)] = x;
            }
        for (int i = 0; i < cells; ++i) best[static_cast<std::size_t>(i)] = std::max(best[static_cast<std::size_t>(i)], value[static_cast<std::size_t>(i)]);
        int pos = 0;
        while (pos < cells && ++choice[static_cast<std::size_t>(pos)] == A) choice[static_cast<std::size_t>(pos++)] = 0;
        if (pos == cells) break;
    }
    return best;
}

std::int64_t first_reduction_mismatch(const RunConfig& config, TieBreak single_tie_break) {
    RunConfig fed_cfg = config;
    fed_cfg.M = 1;
    fed_cfg.algorithm = Algorithm::fedq_eslc;
    RunConfig single_cfg = fed_cfg;
    single_cfg.algorithm = Algorithm::single_eslc;

    std::vector<ServerState> fed_states, single_states;
    RunHooks fed_hooks;
    fed_hooks.on_round = [&](const RoundObservation& o) { fed_states.push_back(o.after); };
    RunHooks single_hooks;
    single_hooks.tie_break = single_tie_break;
    single_hooks.on_round = [&](const RoundObservation& o) { single_states.push_back(o.after); };

    const auto mdp = generate_random_mdp(config.H, config.S, config.A, config.seed);
    const auto oracle = compute_oracle(mdp);
    run(fed_cfg, mdp, oracle, fed_hooks);
    run(single_cfg, mdp, oracle, single_hooks);

    const std::size_t n = std::min(fed_states.size(), single_states.size());
    for (std::size_t i = 0; i < n; ++i)
        if (!bitwise_equal(fed_states[i], single_states[i])) return static_cast<std::int64_t>(i) + 1;
    if (fed_states.size() != single_states.size()) return static_cast<std::int64_t>(n) + 1;
    return 0;
}

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

PropertyResult weight_normalization() {
    double worst = 0.0;
    for (int H : {1, 2, 5, 7})
        for (std::int64_t t = 1; t <= 1000; ++t) {
            // Same running-product order as hoeffding_bonus: sum_i eta_i^t.
            double tail = 1.0, total = 0.0;
            for (std::int64_t i = t; i >= 1; --i) {
                const double e = eta(i, H);
                total += e * tail;
                tail *= 1.0 - e;
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
    return {"schedule: sum_i eta_i^t = 1 (t <= 1000, H in {1,2,5,7})", worst < 1e-12, "max dev " + fmt(worst)};
}

PropertyResult telescoping(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7465ULL));
    double worst = 0.0;
    const int hs[] = {1, 2, 5, 7};
    for (int trial = 0; trial < 1000; ++trial) {
        const int H = hs[trial % 4];
        const auto hi = static_cast<std::int64_t>(1 + rng.uniform_index(2000));
        const auto lo = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(hi)));
        const double lhs = alpha_rate({H, lo, hi, 1.0});
        double tail = 1.0, rhs = 0.0;
        for (std::int64_t t = hi; t > lo; --t) {
            const double e = eta(t, H);
            rhs += e * tail;
            tail *= 1.0 - e;
        }
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return {"schedule: alpha_rate telescopes (1000 windows)", worst < 1e-12, "max dev " + fmt(worst)};
}

PropertyResult oracle_equivalence(std::uint64_t seed) {
    double worst = 0.0;
    bool exact = true;
    for (int i = 0; i < 10; ++i) {
        const auto mdp = generate_random_mdp(2, 2, 2, derive_seed(seed, 0x6f72ULL, static_cast<std::uint64_t>(i)));
        const auto values = optimal_values(mdp);
        const auto brute = enumerate_best_values(mdp);
        for (std::size_t j = 0; j < brute.size(); ++j) worst = std::max(worst, std::abs(brute[j] - values.V[j]));
        const auto gaps = gap_quantities(mdp, values);
        double min_gap = std::numeric_limits<double>::infinity();
        double max_var = 0.0;
        for (int h = 0; h < 2; ++h)
            for (int s = 0; s < 2; ++s)
                for (int a = 0; a < 2; ++a) {
                    double vmax = -std::numeric_limits<double>::infinity();
                    for (int b = 0; b < 2; ++b) vmax = std::max(vmax, values.Q[mdp.sa_index(h, s, b)]);
                    const double g = vmax - values.Q[mdp.sa_index(h, s, a)];
                    if (g > 0.0) min_gap = std::min(min_gap, g);
                    if (h == 0) {
                        const auto row = mdp.transition(h, s, a);
                        double m1 = 0.0, m2 = 0.0;
                        for (int s2 = 0; s2 < 2; ++s2) {
                            m1 += row[s2] * values.V[static_cast<std::size_t>(2 + s2)];
                            m2 += row[s2] * values.V[static_cast<std::size_t>(2 + s2)] * values.V[static_cast<std::size_t>(2 + s2)];
                        }
                        max_var = std::max(max_var, m2 - m1 * m1);
                    }
                }
        if (!gaps.delta_min || *gaps.delta_min != min_gap) exact = false;
        if (max_conditional_variance(mdp, values.V) != max_var) exact = false;
    }
    return {"oracle: value iteration = policy enumeration; gap and variance exact (10 MDPs)",
            worst < 1e-10 && exact, "max dev " + fmt(worst) + (exact ? "" : ", gap/variance mismatch")};
}

PropertyResult structural(const VerifyOptions& opt, int M) {
    std::int64_t rounds = 0;
    std::string first;
    bool ok = true;
    for (int i = 0; i < opt.seeds; ++i) {
        RunConfig cfg = opt.base;
        cfg.M = M;
        cfg.algorithm = Algorithm::fedq_eslc;
        cfg.replication = i;
        cfg.T0 = RunConfig::budget_for(cfg.H, M, opt.episodes);
        InvariantChecker checker(M);
        RunHooks hooks;
        hooks.on_round = [&](const RoundObservation& o) { checker.observe(o); };
        run(cfg, hooks);
        rounds += checker.rounds_checked();
        if (!checker.ok()) {
            ok = false;
            if (first.empty()) first = checker.failures().front();
        }
    }
    return {"fedq: monotonicity, trigger tightness, settlement finality (M=" + std::to_string(M) + ")", ok,
            ok ? std::to_string(rounds) + " rounds checked" : first};
}

PropertyResult reduction(const VerifyOptions& opt) {
    std::string detail;
    bool ok = true;
    for (int i = 0; i < opt.seeds; ++i) {
        RunConfig cfg = opt.base;
        cfg.replication = i;
        cfg.T0 = RunConfig::budget_for(cfg.H, 1, opt.episodes);
        const auto k = first_reduction_mismatch(cfg, opt.single_tie_break);
        if (k != 0) {
            ok = false;
            detail = "replication " + std::to_string(i) + " diverges at round " + std::to_string(k);
            break;
        }
    }
    return {"fedq: M=1 federated machine equals single-agent specialization bit for bit", ok,
            ok ? std::to_string(opt.seeds) + " replications" : detail};
}

PropertyResult accounting_and_bounds(const VerifyOptions& opt) {
    bool ok = true;
    std::string detail;
    for (int M : {1, opt.base.M}) {
        RunConfig cfg = opt.base;
        cfg.M = M;
        cfg.algorithm = Algorithm::fedq_eslc;
        cfg.T0 = RunConfig::budget_for(cfg.H, M, opt.episodes);
        const auto m = run(cfg);
        const std::int64_t per_round = 13LL * M * cfg.H * cfg.S + M + 1;
        if (m.scalars != per_round * m.K) {
            ok = false;
            detail = "scalar count mismatch for M=" + std::to_string(M);
        }
        const auto bound = theorem_bound_check(m);
        if (!bound.ok()) {
            ok = false;
            detail = "round/switching bound violated for M=" + std::to_string(M);
        }
    }
    return {"harness: communication = K (13 M H S + M + 1); round and switching bounds hold", ok, detail};
}

}  // namespace

std::vector<PropertyResult> run_property_suite(const VerifyOptions& opt) {
    std::vector<PropertyResult> out;
    out.push_back(weight_normalization());
    out.push_back(telescoping(opt.base.seed));
    out.push_back(oracle_equivalence(opt.base.seed));
    out.push_back(structural(opt, 1));
    if (opt.base.M != 1) out.push_back(structural(opt, opt.base.M));
    out.push_back(reduction(opt));
    out.push_back(accounting_and_bounds(opt));
    return out;
}

}  // namespace fedrl
