#include "fedrl/baseline.hpp"

#include <algorithm>
#include <cmath>

namespace fedrl {

HoeffdingState HoeffdingState::initial(int H, int S, int A) {
    if (H < 1 || S < 1 || A < 1) throw std::invalid_argument("dimensions must be positive");
    HoeffdingState st;
    st.H = H;
    st.S = S;
    st.A = A;
    st.q.assign(static_cast<std::size_t>(H) * S * A, static_cast<double>(H));
    st.visits.assign(st.q.size(), 0);
    st.v.assign(static_cast<std::size_t>(H) * S, static_cast<double>(H));
    st.policy = DeterministicPolicy(H, S, 0);
    return st;
}

void HoeffdingState::refresh(int h, int s) {
    int best = 0;
    for (int a = 1; a < A; ++a)
        if (q[sa(h, s, a)] > q[sa(h, s, best)]) best = a;
    policy.set(h, s, best);
    v[hs(h, s)] = std::min(static_cast<double>(H), q[sa(h, s, best)]);
}

HoeffdingSingle::HoeffdingSingle(int H, int S, int A, BonusConstants constants, double iota)
    : constants_(constants), iota_(iota), state_(HoeffdingState::initial(H, S, A)) {
    constants_.validate(H);
}

Trajectory HoeffdingSingle::run_episode(const TabularMdp& mdp, Rng& rng, const InitialStateRule& init) {
    auto& st = state_;
    const int H = st.H;
    const double h3 = static_cast<double>(H) * H * H;
    Trajectory traj = sample_episode(mdp, st.policy, init.draw(st.S, rng), rng);
    // Step h reads V_{h+1} before step h+1 is updated, as in the online rule.
    for (int h = 0; h < H; ++h) {
        const Step& step = traj.steps[static_cast<std::size_t>(h)];
        const std::size_t i = st.sa(h, step.state, step.action);
        const std::int64_t t = ++st.visits[i];
        const double lr = eta(t, H);
        const double next_v = h + 1 < H ? st.v[st.hs(h + 1, step.next_state)] : 0.0;
        const double bonus = constants_.c_b * std::sqrt(h3 * iota_ / static_cast<double>(t));
        st.q[i] = std::min(static_cast<double>(H), (1.0 - lr) * st.q[i] + lr * (step.reward + next_v + bonus));
        st.refresh(h, step.state);
    }
    return traj;
}

HoeffdingFederated::HoeffdingFederated(int H, int S, int A, int M, BonusConstants constants, double iota)
    : M_(M), constants_(constants), iota_(iota), state_(HoeffdingState::initial(H, S, A)) {
    if (M < 1) throw std::invalid_argument("need at least one agent");
    constants_.validate(H);
}

std::int64_t HoeffdingFederated::run_round(const TabularMdp& mdp, std::uint64_t run_seed, std::int64_t round,
                                           const InitialStateRule& init, const EpisodeObserver& observer) {
    auto& st = state_;
    const int H = st.H, S = st.S;

    RoundBroadcast bc;
    bc.round = round;
    bc.policy = st.policy;
    bc.visits_on_policy.resize(static_cast<std::size_t>(H) * S);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) bc.visits_on_policy[st.hs(h, s)] = st.visits[st.sa(h, s, st.policy(h, s))];
    bc.v = st.v;
    bc.v_lower.assign(bc.v.size(), 0.0);
    bc.v_ref.assign(bc.v.size(), 0.0);

    std::vector<Rng> rngs;
    for (int m = 0; m < M_; ++m) rngs.push_back(agent_stream(run_seed, m, round));
    const auto explored = agent_explore_lockstep(mdp, bc, M_, rngs, init, observer);

    const std::int64_t i0 = 2 * static_cast<std::int64_t>(M_) * H * (H + 1);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            const std::size_t i = st.sa(h, s, st.policy(h, s));
            std::int64_t n = 0;
            double reward = 0.0, v_sum = 0.0;
            std::vector<double> singles;
            for (const auto& rep : explored.reports) {
                const auto& e = rep.at(h, s);
                if (e.n == 0) continue;
                n += e.n;
                reward = e.reward;
                v_sum += e.v;
                singles.push_back(e.v);
            }
            if (n == 0) continue;
            const std::int64_t n_old = st.visits[i];
            const std::int64_t n_new = n_old + n;
            const RateWindow w{H, n_old, n_new, iota_};
            const double alpha = alpha_rate(w);
            double target;
            if (n_old < i0) {
                double weighted = 0.0;
                for (std::size_t t = 1; t <= singles.size(); ++t)
                    weighted += eta_weight(n_old + static_cast<std::int64_t>(t), n_new, H) * singles[t - 1];
                target = alpha * reward + weighted;
            } else {
                target = alpha * (reward + v_sum / static_cast<double>(n));
            }
            st.q[i] = std::min(static_cast<double>(H), (1.0 - alpha) * st.q[i] + target + hoeffding_bonus(w, constants_));
            st.visits[i] = n_new;
        }
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) st.refresh(h, s);

    // Policy, visit count and V down; reward, count and value sum up.
    const std::int64_t per_agent = static_cast<std::int64_t>(H) * S;
    ledger_.record({3 * M_ * per_agent, 3 * M_ * per_agent, static_cast<std::int64_t>(M_) + 1});
    return explored.episodes_per_agent;
}

}  // namespace fedrl
