#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedrl/rng.hpp"

namespace fedrl {

// Tabular episodic MDP with step-dependent kernels and deterministic rewards.
// Steps, states and actions are 0-based internally: h in [0,H), s in [0,S),
// a in [0,A). The absorbing state after the last step is implicit.
class TabularMdp {
public:
    TabularMdp() = default;

    // Validates shapes, reward range and row normalization (1e-12).
    TabularMdp(int H, int S, int A, std::vector<double> rewards, std::vector<double> transitions);

    int H() const { return H_; }
    int S() const { return S_; }
    int A() const { return A_; }

    double reward(int h, int s, int a) const { return rewards_[sa_index(h, s, a)]; }

    std::span<const double> transition(int h, int s, int a) const {
        return {transitions_.data() + sa_index(h, s, a) * static_cast<std::size_t>(S_),
                static_cast<std::size_t>(S_)};
    }

    std::size_t sa_index(int h, int s, int a) const {
        return (static_cast<std::size_t>(h) * S_ + s) * A_ + a;
    }

    const std::vector<double>& rewards() const { return rewards_; }
    const std::vector<double>& transitions() const { return transitions_; }

    bool operator==(const TabularMdp&) const = default;

private:
    int H_ = 0;
    int S_ = 0;
    int A_ = 0;
    std::vector<double> rewards_;      // [H][S][A]
    std::vector<double> transitions_;  // [H][S][A][S]
};

class DeterministicPolicy {
public:
    DeterministicPolicy() = default;
    DeterministicPolicy(int H, int S, int action = 0)
        : H_(H), S_(S), actions_(static_cast<std::size_t>(H) * S, action) {}

    int H() const { return H_; }
    int S() const { return S_; }

    int operator()(int h, int s) const { return actions_[static_cast<std::size_t>(h) * S_ + s]; }
    void set(int h, int s, int a) { actions_[static_cast<std::size_t>(h) * S_ + s] = a; }

    const std::vector<int>& actions() const { return actions_; }

    bool operator==(const DeterministicPolicy&) const = default;

private:
    int H_ = 0;
    int S_ = 0;
    std::vector<int> actions_;
};

struct Step {
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;
};

struct Trajectory {
    int initial_state = 0;
    std::vector<Step> steps;

    double total_reward() const;
};

TabularMdp generate_random_mdp(int H, int S, int A, std::uint64_t seed);

// MDP with one-hot kernels: (h,s,a) moves to next_state[(h*S+s)*A+a] surely.
TabularMdp make_deterministic_mdp(int H, int S, int A, std::vector<double> rewards,
                                  const std::vector<int>& next_state);

int sample_initial_state(int S, Rng& rng);

int sample_next_state(std::span<const double> row, Rng& rng);

Trajectory sample_episode(const TabularMdp& mdp, const DeterministicPolicy& policy, int s1, Rng& rng);

// JSON document {"H","S","A","rewards":[H][S][A],"transitions":[H][S][A][S]},
// floats written with 17 significant digits.
std::string mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const std::string& text);

void save_mdp(const TabularMdp& mdp, const std::string& path);
TabularMdp load_mdp(const std::string& path);

// FNV-1a over the canonical JSON text; keys the oracle cache.
std::uint64_t mdp_content_hash(const TabularMdp& mdp);

}  // namespace fedrl
