#include "fedrl/mdp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fedrl {

namespace {

void check_dims(int H, int S, int A) {
    if (H < 1 || S < 1 || A < 1)
        throw std::invalid_argument("MDP dimensions must be positive (H=" + std::to_string(H) +
                                    ", S=" + std::to_string(S) + ", A=" + std::to_string(A) + ")");
}

void append_double(std::string& out, double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out += buf;
}

}  // namespace

TabularMdp::TabularMdp(int H, int S, int A, std::vector<double> rewards, std::vector<double> transitions)
    : H_(H), S_(S), A_(A), rewards_(std::move(rewards)), transitions_(std::move(transitions)) {
    check_dims(H, S, A);
    const std::size_t n_sa = static_cast<std::size_t>(H) * S * A;
    if (rewards_.size() != n_sa) throw std::invalid_argument("reward table has wrong size");
    if (transitions_.size() != n_sa * S) throw std::invalid_argument("transition table has wrong size");
    for (double r : rewards_)
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("reward outside [0,1]");
    for (std::size_t row = 0; row < n_sa; ++row) {
        double total = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
            const double p = transitions_[row * S + s2];
            if (!(p >= 0.0)) throw std::invalid_argument("negative transition probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("transition row does not sum to 1");
    }
}

double Trajectory::total_reward() const {
    double total = 0.0;
    for (const auto& st : steps) total += st.reward;
    return total;
}

TabularMdp generate_random_mdp(int H, int S, int A, std::uint64_t seed) {
    check_dims(H, S, A);
    Rng rng(derive_seed(seed, kMdpStreamTag));
    const std::size_t n_sa = static_cast<std::size_t>(H) * S * A;
    std::vector<double> rewards(n_sa);
    std::vector<double> transitions(n_sa * S);
    for (auto& r : rewards) r = rng.uniform01();
    // Uniform on the simplex: normalized i.i.d. Exp(1) draws.
    for (std::size_t row = 0; row < n_sa; ++row) {
        double* p = transitions.data() + row * S;
        double total = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
            p[s2] = rng.exponential();
            total += p[s2];
        }
        if (total <= 0.0) {
            // All draws were exactly zero; fall back to the uniform row.
            for (int s2 = 0; s2 < S; ++s2) p[s2] = 1.0 / S;
            continue;
        }
        for (int s2 = 0; s2 < S; ++s2) p[s2] /= total;
    }
    return TabularMdp(H, S, A, std::move(rewards), std::move(transitions));
}

TabularMdp make_deterministic_mdp(int H, int S, int A, std::vector<double> rewards,
                                  const std::vector<int>& next_state) {
    check_dims(H, S, A);
    const std::size_t n_sa = static_cast<std::size_t>(H) * S * A;
    if (next_state.size() != n_sa) throw std::invalid_argument("next_state table has wrong size");
    std::vector<double> transitions(n_sa * S, 0.0);
    for (std::size_t row = 0; row < n_sa; ++row) {
        if (next_state[row] < 0 || next_state[row] >= S) throw std::invalid_argument("next state out of range");
        transitions[row * S + next_state[row]] = 1.0;
    }
    return TabularMdp(H, S, A, std::move(rewards), std::move(transitions));
}

int sample_initial_state(int S, Rng& rng) {
    return static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(S)));
}

int sample_next_state(std::span<const double> row, Rng& rng) {
    const double u = rng.uniform01();
    double cumulative = 0.0;
    int last_positive = 0;
    for (std::size_t s2 = 0; s2 < row.size(); ++s2) {
        if (row[s2] <= 0.0) continue;
        cumulative += row[s2];
        last_positive = static_cast<int>(s2);
        if (u < cumulative) return last_positive;
    }
    // Rounding left u above the accumulated mass.
    return last_positive;
}

Trajectory sample_episode(const TabularMdp& mdp, const DeterministicPolicy& policy, int s1, Rng& rng) {
    Trajectory traj;
    traj.initial_state = s1;
    traj.steps.reserve(static_cast<std::size_t>(mdp.H()));
    int s = s1;
    for (int h = 0; h < mdp.H(); ++h) {
        const int a = policy(h, s);
        const int next = sample_next_state(mdp.transition(h, s, a), rng);
        traj.steps.push_back({s, a, mdp.reward(h, s, a), next});
        s = next;
    }
    return traj;
}

std::string mdp_to_json(const TabularMdp& mdp) {
    const int H = mdp.H(), S = mdp.S(), A = mdp.A();
    std::string out;
    out += "{\"H\":" + std::to_string(H) + ",\"S\":" + std::to_string(S) + ",\"A\":" + std::to_string(A);
    out += ",\"rewards\":[";
    for (int h = 0; h < H; ++h) {
        out += h ? ",[" : "[";
        for (int s = 0; s < S; ++s) {
            out += s ? ",[" : "[";
            for (int a = 0; a < A; ++a) {
                if (a) out += ',';
                append_double(out, mdp.reward(h, s, a));
            }
            out += ']';
        }
        out += ']';
    }
    out += "],\"transitions\":[";
    for (int h = 0; h < H; ++h) {
        out += h ? ",[" : "[";
        for (int s = 0; s < S; ++s) {
            out += s ? ",[" : "[";
            for (int a = 0; a < A; ++a) {
                out += a ? ",[" : "[";
                const auto row = mdp.transition(h, s, a);
                for (int s2 = 0; s2 < S; ++s2) {
                    if (s2) out += ',';
                    append_double(out, row[s2]);
                }
                out += ']';
            }
            out += ']';
        }
        out += ']';
    }
    out += "]}\n";
    return out;
}

TabularMdp mdp_from_json(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    const int H = doc.at("H").get<int>();
    const int S = doc.at("S").get<int>();
    const int A = doc.at("A").get<int>();
    check_dims(H, S, A);
    std::vector<double> rewards;
    std::vector<double> transitions;
    const auto& r = doc.at("rewards");
    const auto& p = doc.at("transitions");
    if (r.size() != static_cast<std::size_t>(H) || p.size() != static_cast<std::size_t>(H))
        throw std::invalid_argument("MDP document: step dimension mismatch");
    for (int h = 0; h < H; ++h) {
        if (r[h].size() != static_cast<std::size_t>(S) || p[h].size() != static_cast<std::size_t>(S))
            throw std::invalid_argument("MDP document: state dimension mismatch");
        for (int s = 0; s < S; ++s) {
            if (r[h][s].size() != static_cast<std::size_t>(A) || p[h][s].size() != static_cast<std::size_t>(A))
                throw std::invalid_argument("MDP document: action dimension mismatch");
            for (int a = 0; a < A; ++a) {
                rewards.push_back(r[h][s][a].get<double>());
                const auto& row = p[h][s][a];
                if (row.size() != static_cast<std::size_t>(S))
                    throw std::invalid_argument("MDP document: transition row length mismatch");
                for (int s2 = 0; s2 < S; ++s2) transitions.push_back(row[s2].get<double>());
            }
        }
    }
    return TabularMdp(H, S, A, std::move(rewards), std::move(transitions));
}

void save_mdp(const TabularMdp& mdp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << mdp_to_json(mdp);
    if (!out) throw std::runtime_error("failed writing " + path);
}

TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return mdp_from_json(buf.str());
}

std::uint64_t mdp_content_hash(const TabularMdp& mdp) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : mdp_to_json(mdp)) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace fedrl
