#include "fedrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fedrl/baseline.hpp"
#include "json.hpp"

namespace fedrl {

std::string to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::fedq_eslc: return "fedq_eslc";
        case Algorithm::single_eslc: return "single_eslc";
        case Algorithm::hoeffding_baseline: return "hoeffding_baseline";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
    if (name == "fedq_eslc") return Algorithm::fedq_eslc;
    if (name == "single_eslc") return Algorithm::single_eslc;
    if (name == "hoeffding_baseline") return Algorithm::hoeffding_baseline;
    throw std::invalid_argument("unknown algorithm: " + name);
}

void RunConfig::validate() const {
    if (H < 1 || S < 1 || A < 1) throw std::invalid_argument("H, S, A must be positive");
    if (M < 1) throw std::invalid_argument("M must be at least 1");
    if (T0 < H) throw std::invalid_argument("T0 must be at least H");
    if (iota.theory) {
        if (!(iota.p > 0.0 && iota.p < 1.0)) throw std::invalid_argument("theory-mode p must lie in (0,1)");
    } else if (!(iota.value > 0.0)) {
        throw std::invalid_argument("fixed iota must be positive");
    }
    constants.validate(H);
    if (algorithm == Algorithm::single_eslc && M != 1)
        throw std::invalid_argument("single_eslc requires M = 1");
    if (initial_state.fixed && (initial_state.state < 0 || initial_state.state >= S))
        throw std::invalid_argument("fixed initial state out of range");
}

double RunConfig::resolved_iota() const {
    if (!iota.theory) return iota.value;
    const std::int64_t T1 = 2 * T0 + static_cast<std::int64_t>(M) * H * S * A;
    return iota_theory(S, A, T1, iota.p);
}

std::uint64_t RunConfig::run_seed() const {
    return derive_seed(seed, kReplicationTag, static_cast<std::uint64_t>(replication));
}

namespace {

void check_value_range(const ServerState& st, std::vector<std::string>& anomalies) {
    constexpr std::size_t kMaxAnomalies = 32;
    for (std::size_t i = 0; i < st.v.size() && anomalies.size() < kMaxAnomalies; ++i)
        if (st.v_lower[i] > st.v[i]) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "round %lld: V_L > V at (h=%zu, s=%zu): %.17g > %.17g",
                          static_cast<long long>(st.round - 1), i / st.S, i % st.S, st.v_lower[i], st.v[i]);
            anomalies.emplace_back(buf);
        }
}

}  // namespace

RunMetrics run(const RunConfig& config, const RunHooks& hooks) {
    config.validate();
    const auto mdp = generate_random_mdp(config.H, config.S, config.A, config.seed);
    return run(config, mdp, compute_oracle(mdp), hooks);
}

RunMetrics run(const RunConfig& config, const TabularMdp& mdp, const OracleTables& oracle, const RunHooks& hooks) {
    config.validate();
    if (mdp.H() != config.H || mdp.S() != config.S || mdp.A() != config.A)
        throw std::invalid_argument("MDP dimensions do not match the run configuration");

    const int H = config.H, S = config.S, A = config.A, M = config.M;
    const double iota = config.resolved_iota();
    const std::uint64_t seed = config.run_seed();

    RunMetrics metrics;
    metrics.config = config;

    std::vector<double> v_pi;
    double cumulative = 0.0;
    double round_regret = 0.0;
    auto observer = [&](int agent, const Trajectory& traj) {
        const double inc = oracle.vstar(0, traj.initial_state) - v_pi[static_cast<std::size_t>(traj.initial_state)];
        if (inc < -1e-10 && metrics.anomalies.size() < 32)
            metrics.anomalies.push_back("negative regret increment " + std::to_string(inc));
        round_regret += inc;
        cumulative += inc;
        if (agent == M - 1) metrics.regret_by_episode.push_back(cumulative);
    };

    std::int64_t total_episodes = 0;
    std::int64_t switches = 0;
    DeterministicPolicy previous;

    auto record = [&](std::int64_t round, std::int64_t n, const DeterministicPolicy& used, std::int64_t scalars) {
        RoundRecord rec;
        rec.round = round;
        rec.episodes_per_agent = n;
        total_episodes += n * M;
        rec.cumulative_episodes = total_episodes;
        rec.regret = round_regret;
        rec.cumulative_regret = cumulative;
        rec.policy_changed = round > 1 && !(used == previous);
        if (rec.policy_changed) ++switches;
        rec.cumulative_switches = switches;
        rec.cumulative_scalars = scalars;
        metrics.rounds.push_back(rec);
        previous = used;
        round_regret = 0.0;
    };

    switch (config.algorithm) {
        case Algorithm::fedq_eslc: {
            FederatedEslc fed(H, S, A, M, config.constants, iota);
            if (hooks.prepare) hooks.prepare(fed.mutable_state());
            while (fed.state().total_visits() < config.T0) {
                const std::int64_t k = fed.state().round;
                const DeterministicPolicy used = fed.state().policy;
                v_pi = evaluate_policy(mdp, used);
                std::optional<ServerState> before;
                if (hooks.on_round) before = fed.state();
                const auto outcome = fed.run_round(mdp, seed, config.initial_state, observer);
                if (hooks.on_round) hooks.on_round({*before, fed.state(), &outcome, outcome.episodes_per_agent});
                check_value_range(fed.state(), metrics.anomalies);
                record(k, outcome.episodes_per_agent, used, fed.ledger().total());
            }
            metrics.scalars = fed.ledger().total();
            break;
        }
        case Algorithm::single_eslc: {
            SingleAgentEslc single(H, S, A, config.constants, iota, hooks.tie_break);
            if (hooks.prepare) hooks.prepare(single.mutable_state());
            while (single.state().total_visits() < config.T0) {
                const std::int64_t k = single.state().round;
                const DeterministicPolicy used = single.state().policy;
                v_pi = evaluate_policy(mdp, used);
                std::optional<ServerState> before;
                if (hooks.on_round) before = single.state();
                const std::int64_t n = single.run_round(mdp, seed, config.initial_state, observer);
                if (hooks.on_round) hooks.on_round({*before, single.state(), nullptr, n});
                check_value_range(single.state(), metrics.anomalies);
                record(k, n, used, 0);
            }
            break;
        }
        case Algorithm::hoeffding_baseline: {
            if (M == 1) {
                HoeffdingSingle learner(H, S, A, config.constants, iota);
                Rng rng = agent_stream(seed, 0, 0);
                std::int64_t steps = 0;
                std::int64_t k = 1;
                while (steps < config.T0) {
                    const DeterministicPolicy used = learner.state().policy;
                    if (k == 1 || !(used == previous)) v_pi = evaluate_policy(mdp, used);
                    const Trajectory traj = learner.run_episode(mdp, rng, config.initial_state);
                    observer(0, traj);
                    steps += H;
                    record(k++, 1, used, 0);
                }
            } else {
                HoeffdingFederated learner(H, S, A, M, config.constants, iota);
                std::int64_t steps = 0;
                std::int64_t k = 1;
                while (steps < config.T0) {
                    const DeterministicPolicy used = learner.state().policy;
                    v_pi = evaluate_policy(mdp, used);
                    const std::int64_t n = learner.run_round(mdp, seed, k, config.initial_state, observer);
                    steps += n * M * H;
                    record(k++, n, used, learner.ledger().total());
                }
                metrics.scalars = learner.ledger().total();
            }
            break;
        }
    }

    metrics.K = static_cast<std::int64_t>(metrics.rounds.size());
    metrics.T = static_cast<double>(H) * static_cast<double>(total_episodes) / M;
    metrics.regret = cumulative;
    metrics.switching_cost = switches;
    return metrics;
}

double rounds_bound(int H, int S, int A, int M, double T) {
    const double C = static_cast<double>(H) * H * (H + 1) * S * A;
    const double MC = M * C;
    return std::max(2.0 * MC + 4.0 * MC * std::log(T / C), 3.0 * MC);
}

BoundReport theorem_bound_check(const RunMetrics& m) {
    const auto& c = m.config;
    BoundReport r;
    r.C_tilde = static_cast<double>(c.H) * c.H * (c.H + 1) * c.S * c.A;
    r.T = m.T;
    r.rounds = m.K;
    r.rounds_bound = rounds_bound(c.H, c.S, c.A, c.M, m.T);
    r.rounds_ok = static_cast<double>(r.rounds) <= r.rounds_bound;
    if (c.M == 1) {
        r.switching_checked = true;
        r.switching = m.switching_cost;
        r.switching_bound = rounds_bound(c.H, c.S, c.A, 1, m.T);
        r.switching_ok = static_cast<double>(r.switching) <= r.switching_bound;
    }
    return r;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Percentiles summarize(const std::vector<double>& values) {
    Percentiles p;
    p.p10 = percentile(values, 0.10);
    p.p50 = percentile(values, 0.50);
    p.p90 = percentile(values, 0.90);
    double total = 0.0;
    for (double x : values) total += x;
    p.mean = total / static_cast<double>(values.size());
    return p;
}

EnsembleSummary summarize_ensemble(const std::vector<RunMetrics>& runs, int grid_points) {
    if (runs.empty()) throw std::invalid_argument("empty ensemble");
    EnsembleSummary out;
    out.algorithm = runs.front().config.algorithm;
    std::int64_t shortest = runs.front().episodes_per_agent();
    for (const auto& r : runs) shortest = std::min(shortest, r.episodes_per_agent());

    std::int64_t last = 0;
    for (int j = 1; j <= grid_points && shortest > 0; ++j) {
        const std::int64_t e = std::max<std::int64_t>(1, shortest * j / grid_points);
        if (e == last) continue;
        last = e;
        std::vector<double> regret, ratio;
        for (const auto& r : runs) {
            const double value = r.regret_by_episode[static_cast<std::size_t>(e - 1)];
            regret.push_back(value);
            ratio.push_back(value / std::log(static_cast<double>(e) + 1.0));
        }
        out.points.push_back({e, summarize(regret), summarize(ratio)});
    }

    std::vector<double> finals, rounds, switching;
    for (const auto& r : runs) {
        finals.push_back(r.regret);
        rounds.push_back(static_cast<double>(r.K));
        switching.push_back(static_cast<double>(r.switching_cost));
    }
    out.final_regret = summarize(finals);
    out.rounds = summarize(rounds);
    out.switching = summarize(switching);
    return out;
}

std::vector<RunMetrics> replicate_runs(const RunConfig& config, int n_replications, int workers) {
    config.validate();
    const auto mdp = generate_random_mdp(config.H, config.S, config.A, config.seed);
    return replicate_runs(config, mdp, compute_oracle(mdp), n_replications, workers);
}

std::vector<RunMetrics> replicate_runs(const RunConfig& config, const TabularMdp& mdp, const OracleTables& oracle,
                                       int n_replications, int workers) {
    if (n_replications < 1) throw std::invalid_argument("need at least one replication");
    config.validate();

    std::vector<RunMetrics> results(static_cast<std::size_t>(n_replications));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int r = next++; r < n_replications; r = next++) {
            try {
                RunConfig rc = config;
                rc.replication = r;
                results[static_cast<std::size_t>(r)] = run(rc, mdp, oracle);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n_threads = std::clamp(workers, 1, n_replications);
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return results;
}

EnsembleSummary replicate(const RunConfig& config, int n_replications, int workers, int grid_points) {
    return summarize_ensemble(replicate_runs(config, n_replications, workers), grid_points);
}

int workers_from_env() {
    if (const char* env = std::getenv("FEDRL_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

namespace {

nlohmann::json config_json(const RunConfig& c) {
    nlohmann::json doc;
    doc["H"] = c.H;
    doc["S"] = c.S;
    doc["A"] = c.A;
    doc["M"] = c.M;
    doc["T0"] = c.T0;
    doc["seed"] = c.seed;
    doc["replication"] = c.replication;
    doc["constants"] = {{"c_b", c.constants.c_b},
                        {"c_b_R", c.constants.c_b_R},
                        {"c_b_R2", c.constants.c_b_R2},
                        {"beta", c.constants.beta}};
    if (c.iota.theory)
        doc["iota"] = {{"mode", "theory"}, {"p", c.iota.p}};
    else
        doc["iota"] = {{"mode", "fixed"}, {"value", c.iota.value}};
    doc["algorithm"] = to_string(c.algorithm);
    if (c.initial_state.fixed)
        doc["initial_state"] = {{"fixed", c.initial_state.state}};
    else
        doc["initial_state"] = "uniform";
    return doc;
}

nlohmann::json percentiles_json(const Percentiles& p) {
    return {{"p10", p.p10}, {"p50", p.p50}, {"p90", p.p90}, {"mean", p.mean}};
}

}  // namespace

std::string config_to_json(const RunConfig& config) { return config_json(config).dump(); }

RunConfig config_from_json(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    RunConfig c;
    c.H = doc.value("H", c.H);
    c.S = doc.value("S", c.S);
    c.A = doc.value("A", c.A);
    c.M = doc.value("M", c.M);
    c.seed = doc.value("seed", c.seed);
    c.replication = doc.value("replication", c.replication);
    if (doc.contains("T0"))
        c.T0 = doc.at("T0").get<std::int64_t>();
    else if (doc.contains("episodes"))
        c.T0 = RunConfig::budget_for(c.H, c.M, doc.at("episodes").get<std::int64_t>());
    if (doc.contains("constants")) {
        const auto& k = doc.at("constants");
        c.constants.c_b = k.value("c_b", c.constants.c_b);
        c.constants.c_b_R = k.value("c_b_R", c.constants.c_b_R);
        c.constants.c_b_R2 = k.value("c_b_R2", c.constants.c_b_R2);
        c.constants.beta = k.value("beta", c.constants.beta);
    }
    if (doc.contains("iota")) {
        const auto& i = doc.at("iota");
        if (i.is_number()) {
            c.iota.value = i.get<double>();
        } else {
            const std::string mode = i.value("mode", "fixed");
            if (mode == "theory") {
                c.iota.theory = true;
                c.iota.p = i.value("p", c.iota.p);
            } else if (mode == "fixed") {
                c.iota.value = i.value("value", c.iota.value);
            } else {
                throw std::invalid_argument("iota mode must be 'fixed' or 'theory'");
            }
        }
    }
    if (doc.contains("algorithm")) c.algorithm = algorithm_from_string(doc.at("algorithm").get<std::string>());
    if (doc.contains("initial_state")) {
        const auto& init = doc.at("initial_state");
        if (init.is_string()) {
            if (init.get<std::string>() != "uniform") throw std::invalid_argument("initial_state must be 'uniform'");
        } else {
            c.initial_state.fixed = true;
            c.initial_state.state = init.at("fixed").get<int>();
        }
    }
    return c;
}

std::string rounds_csv(const RunMetrics& m) {
    std::ostringstream out;
    out << "# " << kVersion << " config=" << config_to_json(m.config) << "\n";
    out << "# switching counted once per round boundary where the deployed policy changes\n";
    out << "algorithm,round,episodes_per_agent,cumulative_episodes,regret,cumulative_regret,policy_changed,"
           "cumulative_switches,cumulative_scalars\n";
    const std::string tag = to_string(m.config.algorithm);
    char buf[64];
    for (const auto& r : m.rounds) {
        out << tag << ',' << r.round << ',' << r.episodes_per_agent << ',' << r.cumulative_episodes << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.regret);
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.cumulative_regret);
        out << buf << ',' << (r.policy_changed ? 1 : 0) << ',' << r.cumulative_switches << ','
            << r.cumulative_scalars << '\n';
    }
    return out.str();
}

std::string ensemble_to_json(const EnsembleSummary& s, const RunConfig& config) {
    nlohmann::json doc;
    doc["version"] = kVersion;
    doc["config"] = config_json(config);
    doc["algorithm"] = to_string(s.algorithm);
    doc["final_regret"] = percentiles_json(s.final_regret);
    doc["rounds"] = percentiles_json(s.rounds);
    doc["switching_cost"] = percentiles_json(s.switching);
    auto points = nlohmann::json::array();
    for (const auto& p : s.points)
        points.push_back({{"episodes", p.episodes},
                          {"regret", percentiles_json(p.regret)},
                          {"regret_over_log", percentiles_json(p.regret_over_log)}});
    doc["points"] = std::move(points);
    return doc.dump(1) + "\n";
}

std::string figure_csv(const EnsembleSummary& s, const RunConfig& config) {
    std::ostringstream out;
    out << "# " << kVersion << " config=" << config_to_json(config) << "\n";
    out << "episodes,regret_over_log,p10,p50,p90\n";
    char buf[160];
    for (const auto& p : s.points) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(p.episodes),
                      p.regret_over_log.mean, p.regret_over_log.p10, p.regret_over_log.p50, p.regret_over_log.p90);
        out << buf;
    }
    return out.str();
}

}  // namespace fedrl
