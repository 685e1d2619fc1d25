// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fedrl/fedq.hpp"
#include "fedrl/harness.hpp"
#include "fedrl/oracle.hpp"
#include "fedrl/schedule.hpp"
#include "fedrl/verify.hpp"
#include "json.hpp"

using namespace fedrl;

namespace {

struct Outcome {
    bool passed = true;
    std::string detail;
};

std::vector<RunMetrics> g_default_runs;  // every main-algorithm run of the suite, for the bound check

struct Line {
    int id;
    std::string name;
    Outcome outcome;
    double seconds;
};

std::vector<Line> g_lines;

template <typename F>
void criterion(int id, const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "criterion %d done in %.1fs\n", id, s);
    g_lines.push_back({id, name, o, s});
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

int workers() {
    const int env = workers_from_env();
    if (env > 1) return env;
    return std::max(1u, std::thread::hardware_concurrency());
}

struct Experiment {
    RunConfig config;
    int n_replications = 10;
    std::vector<Algorithm> algorithms;
};

Experiment load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Experiment ex;
    ex.config = config_from_json(ss.str());
    const auto doc = nlohmann::json::parse(ss.str());
    ex.n_replications = doc.value("n_replications", 10);
    for (const auto& a : doc.at("algorithms")) ex.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
    return ex;
}

// ---------------------------------------------------------------------------

Outcome structural_invariants() {
    struct Setting {
        int H, S, A, M;
    };
    const Setting settings[] = {{3, 2, 2, 1}, {3, 2, 2, 4}, {5, 3, 2, 10}};
    const std::int64_t episodes = 10000;
    std::int64_t rounds = 0;
    for (const auto& st : settings)
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            RunConfig c;
            c.H = st.H;
            c.S = st.S;
            c.A = st.A;
            c.M = st.M;
            c.seed = seed;
            c.T0 = RunConfig::budget_for(st.H, st.M, episodes);
            c.algorithm = st.M == 1 ? Algorithm::single_eslc : Algorithm::fedq_eslc;
            InvariantChecker checker(st.M);
            RunHooks hooks;
            hooks.on_round = [&](const RoundObservation& o) { checker.observe(o); };
            const auto m = run(c, hooks);
            g_default_runs.push_back(m);
            rounds += checker.rounds_checked();
            if (!checker.ok())
                return {false, fmt("(H,S,A,M)=(%g,%g,%g,%g)", st.H, st.S, st.A, st.M) + " seed " +
                                   std::to_string(seed) + ": " + checker.failures().front()};
            if (checker.rounds_checked() != m.K) return {false, "checker missed rounds"};
        }
    return {true, "60 runs, " + std::to_string(rounds) + " rounds checked"};
}

// Exhaustive search over all deterministic policies. For each (h,s,a) the
// best value among policies that take a at (h,s) is Q*(h,s,a).
struct BruteForce {
    std::vector<double> V, Q;
};

BruteForce brute_force(const TabularMdp& mdp) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A(), cells = H * S;
    const double lowest = -std::numeric_limits<double>::infinity();
    BruteForce out;
    out.Q.assign(static_cast<std::size_t>(cells) * A, lowest);
    std::vector<int> choice(cells, 0);
    std::vector<double> value(cells, 0.0);
    int policies = 0;
    while (true) {
        ++policies;
        for (int h = H - 1; h >= 0; --h)
            for (int s = 0; s < S; ++s) {
                const int a = choice[h * S + s];
                double next = 0.0;
                if (h + 1 < H) {
                    const auto row = mdp.transition(h, s, a);
                    for (int s2 = 0; s2 < S; ++s2) next += row[s2] * value[(h + 1) * S + s2];
                }
                value[h * S + s] = mdp.reward(h, s, a) + next;
                auto& q = out.Q[mdp.sa_index(h, s, a)];
                q = std::max(q, value[h * S + s]);
            }
        int pos = 0;
        while (pos < cells && ++choice[pos] == A) choice[pos++] = 0;
        if (pos == cells) break;
    }
    if (policies != static_cast<int>(std::lround(std::pow(A, cells)))) throw std::logic_error("policy count");
    out.V.assign(cells, lowest);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) out.V[h * S + s] = std::max(out.V[h * S + s], out.Q[mdp.sa_index(h, s, a)]);
    return out;
}

Outcome oracle_equivalence() {
    double worst_v = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto mdp = generate_random_mdp(2, 2, 2, seed);
        const auto o = compute_oracle(mdp);
        const auto bf = brute_force(mdp);
        for (std::size_t i = 0; i < bf.V.size(); ++i) worst_v = std::max(worst_v, std::abs(bf.V[i] - o.Vstar[i]));

        double min_gap = std::numeric_limits<double>::infinity();
        for (int h = 0; h < 2; ++h)
            for (int s = 0; s < 2; ++s)
                for (int a = 0; a < 2; ++a) {
                    const double g = bf.V[h * 2 + s] - bf.Q[mdp.sa_index(h, s, a)];
                    if (g > 0.0) min_gap = std::min(min_gap, g);
                }
        double qvar = 0.0;
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a) {
                const auto row = mdp.transition(0, s, a);
                double mean = 0.0, second = 0.0;
                for (int s2 = 0; s2 < 2; ++s2) {
                    mean += row[s2] * bf.V[2 + s2];
                    second += row[s2] * bf.V[2 + s2] * bf.V[2 + s2];
                }
                qvar = std::max(qvar, second - mean * mean);
            }
        const std::string tag = "seed " + std::to_string(seed);
        if (!o.delta_min.has_value() || *o.delta_min != min_gap)
            return {false, tag + ": gap mismatch " + fmt("%.17g vs %.17g", o.delta_min.value_or(-1.0), min_gap)};
        if (o.Qvar_max != qvar) return {false, tag + ": variance mismatch " + fmt("%.17g vs %.17g", o.Qvar_max, qvar)};
    }
    if (worst_v > 1e-10) return {false, fmt("max |V - V_enum| = %.3g", worst_v)};
    return {true, fmt("10 MDPs x 16 policies, max |V - V_enum| = %.3g; gap and variance exact", worst_v)};
}

Outcome m1_reduction() {
    std::int64_t rounds = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const int H = 5, S = 3, A = 2;
        const auto mdp = generate_random_mdp(H, S, A, seed);
        const std::uint64_t run_seed = derive_seed(seed, kReplicationTag, 0);
        FederatedEslc fed(H, S, A, 1, {}, 1.0);
        SingleAgentEslc single(H, S, A, {}, 1.0);
        std::int64_t episodes = 0;
        while (episodes < 1000) {
            const auto n_fed = fed.run_round(mdp, run_seed, {}).episodes_per_agent;
            const auto n_single = single.run_round(mdp, run_seed, {});
            ++rounds;
            if (n_fed != n_single)
                return {false, "seed " + std::to_string(seed) + ": round lengths differ at round " +
                                   std::to_string(fed.state().round - 1)};
            if (!bitwise_equal(fed.state(), single.state()) ||
                checkpoint_to_json(fed.state(), seed) != checkpoint_to_json(single.state(), seed))
                return {false, "seed " + std::to_string(seed) + ": states differ after round " +
                                   std::to_string(fed.state().round - 1)};
            episodes += n_fed;
        }
        RunConfig c;
        c.seed = seed;
        c.T0 = RunConfig::budget_for(c.H, 1, 1000);
        if (const auto k = first_reduction_mismatch(c); k != 0)
            return {false, "harness-level mismatch at round " + std::to_string(k)};
    }
    return {true, "5 seeds, " + std::to_string(rounds) + " rounds bit-identical"};
}

Outcome schedule_identities() {
    std::mt19937_64 gen(20240601);
    double worst_norm = 0.0, worst_alpha = 0.0;
    int windows = 0;
    for (int H : {1, 2, 5, 7}) {
        for (int k = 0; k < 250; ++k, ++windows) {
            std::uniform_int_distribution<std::int64_t> hi_dist(1, 1000);
            const std::int64_t hi = hi_dist(gen);
            std::uniform_int_distribution<std::int64_t> lo_dist(0, hi - 1);
            const std::int64_t lo = lo_dist(gen);

            // Weights eta_i^hi from the running-product recursion
            // w_i^t = w_i^{t-1} (1 - eta_t), w_t^t = eta_t.
            std::vector<double> w;
            for (std::int64_t t = 1; t <= hi; ++t) {
                const double e = double(H + 1) / double(H + t);
                for (double& x : w) x *= 1.0 - e;
                w.push_back(e);
            }
            double total = 0.0, part = 0.0;
            for (std::int64_t i = 1; i <= hi; ++i) {
                total += w[i - 1];
                if (i > lo) part += w[i - 1];
            }
            worst_norm = std::max(worst_norm, std::abs(total - 1.0));
            worst_alpha = std::max(worst_alpha, std::abs(alpha_rate({H, lo, hi, 1.0}) - part));
            if (hi <= 200)
                for (std::int64_t i = 1; i <= hi; ++i)
                    worst_alpha = std::max(worst_alpha, std::abs(eta_weight(i, hi, H) - w[i - 1]));
        }
    }
    const bool ok = worst_norm < 1e-12 && worst_alpha < 1e-12;
    return {ok, std::to_string(windows) + fmt(" windows, max deviation %.3g (sum), %.3g (window rate)", worst_norm,
                                              worst_alpha)};
}

Outcome communication() {
    struct Setting {
        int H, S, A, M;
    };
    for (const auto& st : {Setting{5, 3, 2, 1}, Setting{5, 3, 2, 10}, Setting{3, 2, 2, 4}, Setting{2, 4, 3, 7}}) {
        const auto mdp = generate_random_mdp(st.H, st.S, st.A, 3);
        FederatedEslc fed(st.H, st.S, st.A, st.M, {}, 1.0);
        const std::int64_t per_round = 13LL * st.M * st.H * st.S + st.M + 1;
        std::int64_t previous = 0;
        for (int k = 1; k <= 100; ++k) {
            fed.run_round(mdp, 1, {});
            const auto total = fed.ledger().total();
            if (total - previous != per_round) return {false, "per-round count mismatch"};
            previous = total;
        }
        if (fed.ledger().total() != fed.ledger().rounds * per_round) return {false, "total != K x per-round"};

        RunConfig c;
        c.H = st.H;
        c.S = st.S;
        c.A = st.A;
        c.M = st.M;
        c.T0 = RunConfig::budget_for(st.H, st.M, 2000);
        const auto m = run(c);
        if (m.scalars != m.K * per_round || m.rounds.back().cumulative_scalars != m.scalars)
            return {false, "harness total != K x per-round"};
    }
    return {true, "4 settings, per-round 13MHS+M+1, total K x per-round"};
}

// Slope of y(e) = Regret(e)/log(e+1) over per-agent episodes (lo, hi].
double curve_slope(const std::vector<double>& cumulative, std::int64_t lo, std::int64_t hi) {
    auto y = [&](std::int64_t e) {
        return e == 0 ? 0.0 : cumulative[static_cast<std::size_t>(e - 1)] / std::log(static_cast<double>(e) + 1.0);
    };
    return (y(hi) - y(lo)) / static_cast<double>(hi - lo);
}

// Rounds that end inside (lo, hi] per per-agent episode in that range.
double rounds_per_episode(const RunMetrics& m, std::int64_t lo, std::int64_t hi) {
    std::int64_t end = 0, count = 0;
    for (const auto& r : m.rounds) {
        end += r.episodes_per_agent;
        if (end > lo && end <= hi) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(hi - lo);
}

Outcome desk_experiments() {
    std::string detail;
    bool ok = true;
    for (const char* file : {"desk_m1.json", "desk_m10.json"}) {
        const auto ex = load_experiment(std::string(FEDRL_EXPERIMENT_DIR) + "/" + file);
        const auto& cfg = ex.config;
        const auto mdp = generate_random_mdp(cfg.H, cfg.S, cfg.A, cfg.seed);
        const auto oracle = compute_oracle(mdp);

        std::vector<RunMetrics> main_runs, base_runs;
        for (Algorithm alg : ex.algorithms) {
            RunConfig rc = cfg;
            rc.algorithm = alg == Algorithm::fedq_eslc && cfg.M == 1 ? Algorithm::single_eslc : alg;
            auto runs = replicate_runs(rc, mdp, oracle, ex.n_replications, workers());
            if (alg == Algorithm::hoeffding_baseline)
                base_runs = std::move(runs);
            else
                main_runs = std::move(runs);
        }
        if (main_runs.empty() || base_runs.empty()) return {false, std::string(file) + " lacks an algorithm"};
        for (const auto& m : main_runs) g_default_runs.push_back(m);

        std::vector<double> main_final, base_final;
        for (const auto& m : main_runs) main_final.push_back(m.regret);
        for (const auto& m : base_runs) base_final.push_back(m.regret);
        const double main_med = percentile(main_final, 0.5), base_med = percentile(base_final, 0.5);
        const bool a = main_med < base_med;

        std::int64_t E = main_runs.front().episodes_per_agent();
        for (const auto& m : main_runs) E = std::min(E, m.episodes_per_agent());
        const std::int64_t q = E / 4;
        std::vector<double> mean_curve(static_cast<std::size_t>(E), 0.0);
        for (const auto& m : main_runs)
            for (std::int64_t e = 0; e < E; ++e)
                mean_curve[static_cast<std::size_t>(e)] += m.regret_by_episode[static_cast<std::size_t>(e)] / main_runs.size();
        const double first = curve_slope(mean_curve, 0, q), last = curve_slope(mean_curve, E - q, E);
        const bool b = last <= 0.5 * first;

        bool c = true;
        double worst_ratio = 0.0;
        for (const auto& m : main_runs) {
            const double r = rounds_per_episode(m, E - q, E) / rounds_per_episode(m, 0, q);
            worst_ratio = std::max(worst_ratio, r);
            if (!(r <= 0.2)) c = false;
        }
        ok = ok && a && b && c;
        detail += std::string(detail.empty() ? "" : "; ") + "M=" + std::to_string(cfg.M) + ", " +
                  std::to_string(E) + " episodes/agent" +
                  fmt(": median regret %.1f vs %.1f baseline, slope ratio %.3f, worst rounds ratio %.4f", main_med,
                      base_med, last / first, worst_ratio) +
                  (a ? "" : " [a fails]") + (b ? "" : " [b fails]") + (c ? "" : " [c fails]");
    }
    return {ok, detail};
}

Outcome bound_conformance() {
    if (g_default_runs.empty()) return {false, "no runs recorded"};
    double tightest = 0.0;
    for (const auto& m : g_default_runs) {
        const auto b = theorem_bound_check(m);
        if (!b.ok())
            return {false, "M=" + std::to_string(m.config.M) + " rep " + std::to_string(m.config.replication) +
                               fmt(": K=%g bound %.1f, switches %g bound %.1f", b.rounds, b.rounds_bound,
                                   b.switching, b.switching_bound)};
        tightest = std::max(tightest, b.rounds / b.rounds_bound);
        if (b.switching_checked) tightest = std::max(tightest, b.switching / b.switching_bound);
    }
    return {true, std::to_string(g_default_runs.size()) + fmt(" runs, max observed/bound %.4f", tightest)};
}

Outcome optimism_sandwich() {
    RunConfig c;
    c.H = 3;
    c.S = 2;
    c.A = 2;
    c.M = 1;
    c.algorithm = Algorithm::single_eslc;
    c.iota.theory = true;
    c.iota.p = 0.05;
    c.T0 = RunConfig::budget_for(3, 1, 10000);
    const auto mdp = generate_random_mdp(c.H, c.S, c.A, c.seed);
    const auto oracle = compute_oracle(mdp);

    int clean = 0;
    std::string violations;
    for (int rep = 0; rep < 20; ++rep) {
        c.replication = rep;
        std::int64_t bad = 0;
        std::string first;
        RunHooks hooks;
        hooks.on_round = [&](const RoundObservation& o) {
            for (int h = 0; h < c.H; ++h)
                for (int s = 0; s < c.S; ++s) {
                    const double vs = oracle.vstar(h, s);
                    const auto i = o.after.hs(h, s);
                    if (o.after.v_lower[i] <= vs && vs <= o.after.v[i]) continue;
                    if (bad++ == 0)
                        first = fmt("round %g (h=%g,s=%g): ", o.after.round - 1, h + 1, s + 1) +
                                fmt("V_L=%.6f V*=%.6f V=%.6f", o.after.v_lower[i], vs, o.after.v[i]);
                }
        };
        run(c, mdp, oracle, hooks);
        if (bad == 0)
            ++clean;
        else
            violations += " rep " + std::to_string(rep) + ": " + std::to_string(bad) + " violations, first at " + first + ";";
    }
    return {clean >= 19, std::to_string(clean) + "/20 replications clean" + (violations.empty() ? "" : " --") + violations};
}

}  // namespace

int main() {
    criterion(2, "structural invariants", structural_invariants);
    criterion(3, "oracle equivalence", oracle_equivalence);
    criterion(4, "M=1 reduction", m1_reduction);
    criterion(5, "schedule identities", schedule_identities);
    criterion(6, "communication accounting", communication);
    criterion(7, "desk-scale figure reproduction", desk_experiments);
    criterion(1, "round and switching bounds", bound_conformance);
    criterion(8, "optimism sandwich", optimism_sandwich);
    std::sort(g_lines.begin(), g_lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
    int failures = 0;
    for (const auto& l : g_lines) {
        std::printf("[%s] %d. %s (%.1fs)%s%s\n", l.outcome.passed ? "PASS" : "FAIL", l.id, l.name.c_str(), l.seconds,
                    l.outcome.detail.empty() ? "" : " -- ", l.outcome.detail.c_str());
        if (!l.outcome.passed) ++failures;
    }
    std::printf("%s: %d of %zu criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures, g_lines.size());
    return failures == 0 ? 0 : 1;
}
