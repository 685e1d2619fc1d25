// fedrl: generate environments, run experiments, verify properties.
//
// Exit codes: 0 success, 1 property or bound failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedrl/harness.hpp"
#include "fedrl/mdp.hpp"
#include "fedrl/oracle.hpp"
#include "fedrl/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fedrl;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct ExperimentFile {
    RunConfig config;
    int n_replications = 10;
    std::string output_dir = "out";
    std::vector<Algorithm> algorithms{Algorithm::fedq_eslc};
    std::string mdp_path;
};

ExperimentFile load_experiment(const std::string& path) {
    ExperimentFile ex;
    const std::string text = read_file(path);
    try {
        const auto doc = nlohmann::json::parse(text);
        ex.config = config_from_json(text);
        ex.n_replications = doc.value("n_replications", ex.n_replications);
        ex.output_dir = doc.value("output_dir", ex.output_dir);
        ex.mdp_path = doc.value("mdp_path", std::string());
        if (doc.contains("algorithms")) {
            ex.algorithms.clear();
            for (const auto& a : doc.at("algorithms")) ex.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
        }
        ex.config.validate();
        if (ex.n_replications < 1) throw std::invalid_argument("n_replications must be >= 1");
        if (ex.algorithms.empty()) throw std::invalid_argument("algorithm list is empty");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!ex.mdp_path.empty() && fs::path(ex.mdp_path).is_relative())
        ex.mdp_path = (fs::path(path).parent_path() / ex.mdp_path).string();
    return ex;
}

fs::path oracle_path_for(const fs::path& mdp_path) {
    fs::path p = mdp_path;
    p.replace_extension(".oracle.json");
    return p;
}

// Loads the cached oracle when its hash matches, otherwise recomputes.
OracleTables oracle_for(const TabularMdp& mdp, const fs::path& mdp_path) {
    const auto cache = oracle_path_for(mdp_path);
    if (fs::exists(cache)) {
        if (auto cached = oracle_from_json(read_file(cache.string()), mdp_content_hash(mdp))) return *cached;
    }
    return compute_oracle(mdp);
}

void print_oracle_summary(const OracleTables& t) {
    if (t.delta_min)
        std::printf("delta_min   %.17g\n", *t.delta_min);
    else
        std::printf("delta_min   undefined (degenerate MDP: every action optimal)\n");
    std::printf("Qvar_max    %.17g\n", t.Qvar_max);
    if (t.C_st)
        std::printf("C_st        %.17g\n", *t.C_st);
    else
        std::printf("C_st        undefined\n");
    std::printf("multiple optimal actions at %zu (h,s) pairs%s\n", t.multiple_optima.size(),
                t.support_has_multiple_optima ? " (some on the optimal support: G-MDP condition (b) fails)" : "");
    std::printf("uniqueness  %s\n", GmdpStatistics::kUniquenessScope);
}

int cmd_gen_mdp(int H, int S, int A, std::uint64_t seed, const std::string& out) {
    TabularMdp mdp;
    try {
        mdp = generate_random_mdp(H, S, A, seed);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto oracle = compute_oracle(mdp);
    save_mdp(mdp, out);
    write_file(oracle_path_for(out), oracle_to_json(oracle, mdp_content_hash(mdp)));
    std::printf("wrote %s and %s\n", out.c_str(), oracle_path_for(out).string().c_str());
    print_oracle_summary(oracle);
    if (oracle.degenerate()) std::fprintf(stderr, "warning: degenerate MDP; gap-dependent metrics are undefined\n");
    return kOk;
}

int cmd_run(const std::string& experiment_path, int workers, const std::string& out_override) {
    const auto ex = load_experiment(experiment_path);
    const fs::path out_dir = out_override.empty() ? fs::path(ex.output_dir) : fs::path(out_override);
    fs::create_directories(out_dir);

    const auto& cfg = ex.config;
    TabularMdp mdp;
    OracleTables oracle;
    if (!ex.mdp_path.empty()) {
        mdp = load_mdp(ex.mdp_path);
        if (mdp.H() != cfg.H || mdp.S() != cfg.S || mdp.A() != cfg.A)
            throw ConfigError("MDP file " + ex.mdp_path + " does not match the configured (H,S,A)");
        oracle = oracle_for(mdp, ex.mdp_path);
    } else {
        mdp = generate_random_mdp(cfg.H, cfg.S, cfg.A, cfg.seed);
        oracle = compute_oracle(mdp);
    }
    save_mdp(mdp, (out_dir / "mdp.json").string());

    bool bounds_ok = true;
    nlohmann::json bound_doc;
    bound_doc["version"] = kVersion;
    bound_doc["switching_convention"] = "one switch per round boundary where the deployed policy changes";
    bound_doc["runs"] = nlohmann::json::array();

    for (Algorithm alg : ex.algorithms) {
        RunConfig rc = cfg;
        rc.algorithm = (alg == Algorithm::fedq_eslc && cfg.M == 1) ? Algorithm::single_eslc : alg;
        const std::string tag = to_string(rc.algorithm);
        std::printf("running %s: %d replication(s), M=%d, T0=%lld\n", tag.c_str(), ex.n_replications, rc.M,
                    static_cast<long long>(rc.T0));
        const auto runs = replicate_runs(rc, mdp, oracle, ex.n_replications, workers);
        for (const auto& m : runs) {
            const auto name = tag + "_rep" + std::to_string(m.config.replication) + "_rounds.csv";
            write_file(out_dir / name, rounds_csv(m));
            for (const auto& a : m.anomalies) std::fprintf(stderr, "anomaly (%s rep %lld): %s\n", tag.c_str(),
                                                           static_cast<long long>(m.config.replication), a.c_str());
            if (rc.algorithm == Algorithm::hoeffding_baseline) continue;
            const auto b = theorem_bound_check(m);
            nlohmann::json entry = {{"algorithm", tag},
                                    {"replication", m.config.replication},
                                    {"C_tilde", b.C_tilde},
                                    {"T", b.T},
                                    {"rounds", b.rounds},
                                    {"rounds_bound", b.rounds_bound},
                                    {"rounds_ok", b.rounds_ok}};
            if (b.switching_checked) {
                entry["switching"] = b.switching;
                entry["switching_bound"] = b.switching_bound;
                entry["switching_ok"] = b.switching_ok;
            }
            bound_doc["runs"].push_back(entry);
            if (!b.ok()) {
                bounds_ok = false;
                std::fprintf(stderr, "BOUND VIOLATION: %s rep %lld: K=%lld (bound %.3f), switches=%lld\n", tag.c_str(),
                             static_cast<long long>(m.config.replication), static_cast<long long>(b.rounds),
                             b.rounds_bound, static_cast<long long>(b.switching));
            }
        }
        const auto summary = summarize_ensemble(runs);
        write_file(out_dir / (tag + "_ensemble.json"), ensemble_to_json(summary, rc));
        write_file(out_dir / (tag + "_figure.csv"), figure_csv(summary, rc));
        std::printf("  final regret p10/p50/p90: %.3f / %.3f / %.3f; rounds p50 %.0f; switching p50 %.0f\n",
                    summary.final_regret.p10, summary.final_regret.p50, summary.final_regret.p90, summary.rounds.p50,
                    summary.switching.p50);
    }
    bound_doc["all_ok"] = bounds_ok;
    write_file(out_dir / "bounds.json", bound_doc.dump(1) + "\n");
    if (!bounds_ok) {
        std::fprintf(stderr, "round/switching bound check failed\n");
        return kFailure;
    }
    return kOk;
}

int cmd_verify(const std::string& experiment_path, int seeds, std::int64_t episodes, bool inject_tiebreak_fault) {
    VerifyOptions opt;
    if (!experiment_path.empty()) opt.base = load_experiment(experiment_path).config;
    opt.base.constants.validate(opt.base.H);
    opt.seeds = seeds;
    opt.episodes = episodes;
    if (inject_tiebreak_fault) opt.single_tie_break = TieBreak::highest_index;
    bool all = true;
    for (const auto& r : run_property_suite(opt)) {
        std::printf("[%s] %s%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.empty() ? "" : " -- ",
                    r.detail.c_str());
        all = all && r.passed;
    }
    return all ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated early-settled low-cost Q-learning simulator"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-mdp", "Generate a random tabular MDP and its oracle tables");
    int H = 5, S = 3, A = 2;
    std::uint64_t seed = 1;
    std::string out_path;
    gen->add_option("--H", H, "Horizon")->capture_default_str();
    gen->add_option("--S", S, "State count")->capture_default_str();
    gen->add_option("--A", A, "Action count")->capture_default_str();
    gen->add_option("--seed", seed, "Master seed")->capture_default_str();
    gen->add_option("-o,--out", out_path, "Output MDP JSON path")->required();

    auto* runc = app.add_subcommand("run", "Run an experiment file");
    std::string experiment;
    int workers = workers_from_env();
    std::string out_dir;
    runc->add_option("experiment", experiment, "Experiment JSON file")->required();
    runc->add_option("-j,--workers", workers, "Replication workers (default: FEDRL_WORKERS or 1)");
    runc->add_option("-o,--out", out_dir, "Override the experiment's output directory");

    auto* ver = app.add_subcommand("verify", "Run the property suite");
    std::string verify_experiment;
    int seeds = 5;
    std::int64_t episodes = 1000;
    bool inject = false;
    ver->add_option("experiment", verify_experiment, "Experiment JSON file (optional)");
    ver->add_option("--seeds", seeds, "Replications per run-based property")->capture_default_str();
    ver->add_option("--episodes", episodes, "Episodes per agent per run")->capture_default_str();
    ver->add_flag("--inject-tiebreak-fault", inject, "Test hook: perturb tie-breaking in the single-agent path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*gen) return cmd_gen_mdp(H, S, A, seed, out_path);
        if (*runc) return cmd_run(experiment, workers, out_dir);
        if (*ver) return cmd_verify(verify_experiment, seeds, episodes, inject);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kOk;
}
