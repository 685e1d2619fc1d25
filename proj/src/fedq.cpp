#include "fedrl/fedq.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "json.hpp"

namespace fedrl {

ServerState ServerState::initial(int H, int S, int A) {
    if (H < 1 || S < 1 || A < 1) throw std::invalid_argument("server dimensions must be positive");
    ServerState st;
    st.H = H;
    st.S = S;
    st.A = A;
    const std::size_t n_sa = static_cast<std::size_t>(H) * S * A;
    const std::size_t n_s = static_cast<std::size_t>(H) * S;
    const double top = static_cast<double>(H);
    st.q_upper.assign(n_sa, top);
    st.q_lower.assign(n_sa, 0.0);
    st.q_ref.assign(n_sa, top);
    st.q.assign(n_sa, top);
    st.visits.assign(n_sa, 0);
    st.mu_ref.assign(n_sa, 0.0);
    st.sigma_ref.assign(n_sa, 0.0);
    st.mu_adv.assign(n_sa, 0.0);
    st.sigma_adv.assign(n_sa, 0.0);
    st.beta_ref.assign(n_sa, 0.0);
    st.v.assign(n_s, top);
    st.v_lower.assign(n_s, 0.0);
    st.v_ref.assign(n_s, top);
    st.ref_unsettled.assign(n_s, 1);
    st.policy = DeterministicPolicy(H, S, 0);
    return st;
}

std::int64_t ServerState::total_visits() const {
    std::int64_t total = 0;
    for (auto n : visits) total += n;
    return total;
}

void ServerState::seed_q(const std::vector<double>& table) {
    if (table.size() != q.size()) throw std::invalid_argument("seed_q: table has wrong size");
    q_upper = table;
    q_ref = table;
    q = table;
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            int best = 0;
            for (int a = 1; a < A; ++a)
                if (q[sa(h, s, a)] > q[sa(h, s, best)]) best = a;
            policy.set(h, s, best);
            v[hs(h, s)] = q[sa(h, s, best)];
            v_ref[hs(h, s)] = v[hs(h, s)];
        }
}

namespace {

template <typename T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

}  // namespace

bool bitwise_equal(const ServerState& a, const ServerState& b) {
    return a.H == b.H && a.S == b.S && a.A == b.A && a.round == b.round && same_bits(a.q_upper, b.q_upper) &&
           same_bits(a.q_lower, b.q_lower) && same_bits(a.q_ref, b.q_ref) && same_bits(a.q, b.q) &&
           same_bits(a.visits, b.visits) && same_bits(a.mu_ref, b.mu_ref) && same_bits(a.sigma_ref, b.sigma_ref) &&
           same_bits(a.mu_adv, b.mu_adv) && same_bits(a.sigma_adv, b.sigma_adv) &&
           same_bits(a.beta_ref, b.beta_ref) && same_bits(a.v, b.v) && same_bits(a.v_lower, b.v_lower) &&
           same_bits(a.v_ref, b.v_ref) && same_bits(a.ref_unsettled, b.ref_unsettled) && a.policy == b.policy;
}

RoundBroadcast make_broadcast(const ServerState& server) {
    RoundBroadcast bc;
    bc.round = server.round;
    bc.policy = server.policy;
    bc.visits_on_policy.resize(static_cast<std::size_t>(server.H) * server.S);
    for (int h = 0; h < server.H; ++h)
        for (int s = 0; s < server.S; ++s)
            bc.visits_on_policy[server.hs(h, s)] = server.visits[server.sa(h, s, server.policy(h, s))];
    bc.v = server.v;
    bc.v_lower = server.v_lower;
    bc.v_ref = server.v_ref;
    return bc;
}

std::int64_t visit_cap(std::int64_t N, int M, int H) {
    const std::int64_t denom = static_cast<std::int64_t>(M) * H * (H + 1);
    return std::max<std::int64_t>(1, N / denom);
}

RoundCost round_communication(int M, int H, int S) {
    const std::int64_t per_agent = static_cast<std::int64_t>(H) * S;
    return {5 * M * per_agent, 8 * M * per_agent, static_cast<std::int64_t>(M) + 1};
}

void CommunicationLedger::record(const RoundCost& cost) {
    ++rounds;
    downlink += cost.downlink;
    uplink += cost.uplink;
    signals += cost.signals;
}

namespace kernel {

void accumulate_next_state(ReportEntry& e, int h, int next_state, int H, std::span<const double> v,
                           std::span<const double> v_lower, std::span<const double> v_ref, int S) {
    ++e.n;
    // Every value function vanishes after the last step.
    if (h + 1 >= H) return;
    const std::size_t i = static_cast<std::size_t>(h + 1) * S + next_state;
    const double value = v[i];
    const double lower = v_lower[i];
    const double ref = v_ref[i];
    const double adv = value - ref;
    e.v += value;
    e.v_lower += lower;
    e.mu_r += ref;
    e.sigma_r += ref * ref;
    e.mu_a += adv;
    e.sigma_a += adv * adv;
}

void update_triple(ServerState& st, std::size_t idx, const TripleRound& d, int M, const BonusConstants& c,
                   double iota) {
    const int H = st.H;
    const std::int64_t n = d.n;
    const std::int64_t n_old = st.visits[idx];
    const std::int64_t n_new = n_old + n;
    const double dn = static_cast<double>(n);

    // Round-wise means.
    const double mean_v = d.sums.v / dn;
    const double mean_v_lower = d.sums.v_lower / dn;
    const double mean_mu_r = d.sums.mu_r / dn;
    const double mean_sigma_r = d.sums.sigma_r / dn;
    const double mean_mu_a = d.sums.mu_a / dn;
    const double mean_sigma_a = d.sums.sigma_a / dn;

    // Historical reference means, visit-count weighted.
    const double mu_ref = (static_cast<double>(n_old) * st.mu_ref[idx] + dn * mean_mu_r) / static_cast<double>(n_new);
    const double sigma_ref =
        (static_cast<double>(n_old) * st.sigma_ref[idx] + dn * mean_sigma_r) / static_cast<double>(n_new);

    const RateWindow w{H, n_old, n_new, iota};
    const double alpha = alpha_rate(w);
    const double keep = 1.0 - alpha;
    const double r = d.reward;
    const std::int64_t i0 = 2 * static_cast<std::int64_t>(M) * H * (H + 1);

    double mu_adv, sigma_adv;
    double upper_target, lower_target, ref_target;  // everything except the carried estimate and bonus
    if (n_old < i0) {
        // Each agent visited at most once; weights follow ascending agent index.
        if (static_cast<std::int64_t>(d.single_visits.size()) != n)
            throw ProtocolError("agent visited a triple more than once below the i0 threshold");
        double adv_mu_sum = 0.0, adv_sigma_sum = 0.0, v_sum = 0.0, lower_sum = 0.0, ref_sum = 0.0;
        for (std::int64_t t = 1; t <= n; ++t) {
            const auto& x = d.single_visits[static_cast<std::size_t>(t - 1)];
            const double wt = eta_weight(n_old + t, n_new, H);
            adv_mu_sum += wt * x.mu_a;
            adv_sigma_sum += wt * x.sigma_a;
            v_sum += wt * x.v;
            lower_sum += wt * x.v_lower;
            ref_sum += wt * (x.v - x.mu_r);
        }
        mu_adv = keep * st.mu_adv[idx] + adv_mu_sum;
        sigma_adv = keep * st.sigma_adv[idx] + adv_sigma_sum;
        upper_target = alpha * r + v_sum;
        lower_target = alpha * r + lower_sum;
        ref_target = alpha * (r + mu_ref) + ref_sum;
    } else {
        mu_adv = keep * st.mu_adv[idx] + alpha * mean_mu_a;
        sigma_adv = keep * st.sigma_adv[idx] + alpha * mean_sigma_a;
        upper_target = alpha * (r + mean_v);
        lower_target = alpha * (r + mean_v_lower);
        ref_target = alpha * (r + mu_ref + mean_v - mean_mu_r);
    }

    const double beta_new = beta_R(mu_ref, sigma_ref, mu_adv, sigma_adv, n_new, H, iota, c.c_b_R);
    const double bonus = hoeffding_bonus(w, c);
    const double ref_bonus = reference_bonus(w, st.beta_ref[idx], beta_new, c);

    const double q_upper = keep * st.q_upper[idx] + upper_target + bonus;
    const double q_lower = keep * st.q_lower[idx] + lower_target - bonus;
    const double q_ref = keep * st.q_ref[idx] + ref_target + ref_bonus;

    st.q_upper[idx] = q_upper;
    st.q_lower[idx] = q_lower;
    st.q_ref[idx] = q_ref;
    st.q[idx] = std::min({q_upper, q_ref, st.q[idx]});
    st.visits[idx] = n_new;
    st.mu_ref[idx] = mu_ref;
    st.sigma_ref[idx] = sigma_ref;
    st.mu_adv[idx] = mu_adv;
    st.sigma_adv[idx] = sigma_adv;
    st.beta_ref[idx] = beta_new;
}

void finish_round(ServerState& st, double beta, TieBreak tie_break) {
    for (int h = 0; h < st.H; ++h)
        for (int s = 0; s < st.S; ++s) {
            int best = 0;
            double best_lower = st.q_lower[st.sa(h, s, 0)];
            for (int a = 1; a < st.A; ++a) {
                const double qa = st.q[st.sa(h, s, a)];
                const double qb = st.q[st.sa(h, s, best)];
                if (qa > qb || (tie_break == TieBreak::highest_index && qa == qb)) best = a;
                best_lower = std::max(best_lower, st.q_lower[st.sa(h, s, a)]);
            }
            const std::size_t i = st.hs(h, s);
            st.policy.set(h, s, best);
            st.v[i] = st.q[st.sa(h, s, best)];
            st.v_lower[i] = std::max(best_lower, st.v_lower[i]);

            if (st.v[i] - st.v_lower[i] > beta) {
                st.v_ref[i] = st.v[i];
            } else if (st.ref_unsettled[i]) {
                st.v_ref[i] = st.v[i];
                st.ref_unsettled[i] = 0;
            }
        }
    ++st.round;
}

}  // namespace kernel

ExplorationResult agent_explore_lockstep(const TabularMdp& mdp, const RoundBroadcast& bc, int M,
                                         std::span<Rng> rngs, const InitialStateRule& init,
                                         const EpisodeObserver& observer) {
    const int H = mdp.H(), S = mdp.S();
    if (static_cast<int>(rngs.size()) != M) throw std::invalid_argument("need one generator stream per agent");
    const std::size_t n_s = static_cast<std::size_t>(H) * S;

    std::vector<std::int64_t> caps(n_s);
    for (std::size_t i = 0; i < n_s; ++i) caps[i] = visit_cap(bc.visits_on_policy[i], M, H);

    ExplorationResult out;
    out.reports.resize(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        auto& rep = out.reports[static_cast<std::size_t>(m)];
        rep.agent = m;
        rep.round = bc.round;
        rep.H = H;
        rep.S = S;
        rep.entries.resize(n_s);
        for (int h = 0; h < H; ++h)
            for (int s = 0; s < S; ++s) rep.at(h, s).action = bc.policy(h, s);
    }

    bool triggered = false;
    while (!triggered) {
        for (int m = 0; m < M; ++m) {
            auto& rng = rngs[static_cast<std::size_t>(m)];
            auto& rep = out.reports[static_cast<std::size_t>(m)];
            const Trajectory traj = sample_episode(mdp, bc.policy, init.draw(S, rng), rng);
            for (int h = 0; h < H; ++h) {
                const Step& st = traj.steps[static_cast<std::size_t>(h)];
                ReportEntry& e = rep.at(h, st.state);
                e.reward = st.reward;
                kernel::accumulate_next_state(e, h, st.next_state, H, bc.v, bc.v_lower, bc.v_ref, S);
                if (e.n >= caps[static_cast<std::size_t>(h) * S + st.state]) triggered = true;
            }
            if (observer) observer(m, traj);
        }
        ++out.episodes_per_agent;
    }
    return out;
}

ServerState aggregate_round(const ServerState& server, const std::vector<AgentRoundReport>& reports, int M,
                            const BonusConstants& constants, double iota) {
    const int H = server.H, S = server.S;
    if (static_cast<int>(reports.size()) != M) throw ProtocolError("expected one report per agent");
    for (int m = 0; m < M; ++m) {
        const auto& rep = reports[static_cast<std::size_t>(m)];
        if (rep.agent != m) throw ProtocolError("reports must be ordered by agent index");
        if (rep.round != server.round) throw ProtocolError("report belongs to a different round");
        if (rep.H != H || rep.S != S || rep.entries.size() != static_cast<std::size_t>(H) * S)
            throw ProtocolError("report has wrong dimensions");
        for (int h = 0; h < H; ++h)
            for (int s = 0; s < S; ++s) {
                const auto& e = rep.at(h, s);
                if (e.n < 0) throw ProtocolError("negative visit count in report");
                if (e.action != server.policy(h, s) && e.n != 0)
                    throw ProtocolError("report carries visits for an action off the broadcast policy");
                if (e.n == 0 && (e.v != 0.0 || e.v_lower != 0.0 || e.mu_r != 0.0 || e.sigma_r != 0.0 ||
                                 e.mu_a != 0.0 || e.sigma_a != 0.0))
                    throw ProtocolError("nonzero sums reported without visits");
            }
    }

    ServerState next = server;
    const std::int64_t i0 = 2 * static_cast<std::int64_t>(M) * H * (H + 1);
    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            const int a = server.policy(h, s);
            const std::size_t idx = server.sa(h, s, a);
            kernel::TripleRound d;
            for (const auto& rep : reports) {
                const auto& e = rep.at(h, s);
                if (e.n == 0) continue;
                d.n += e.n;
                d.reward = e.reward;
                d.sums.v += e.v;
                d.sums.v_lower += e.v_lower;
                d.sums.mu_r += e.mu_r;
                d.sums.sigma_r += e.sigma_r;
                d.sums.mu_a += e.mu_a;
                d.sums.sigma_a += e.sigma_a;
                if (server.visits[idx] < i0) {
                    if (e.n != 1) throw ProtocolError("agent exceeded the single-visit cap below i0");
                    d.single_visits.push_back({e.v, e.v_lower, e.mu_r, e.sigma_r, e.mu_a, e.sigma_a});
                }
            }
            if (d.n > 0) kernel::update_triple(next, idx, d, M, constants, iota);
        }
    kernel::finish_round(next, constants.beta, TieBreak::lowest_index);
    return next;
}

FederatedEslc::FederatedEslc(int H, int S, int A, int M, BonusConstants constants, double iota)
    : M_(M), constants_(constants), iota_(iota), state_(ServerState::initial(H, S, A)) {
    if (M < 1) throw std::invalid_argument("need at least one agent");
    constants_.validate(H);
    if (!(iota > 0.0)) throw std::invalid_argument("iota must be positive");
}

RoundOutcome FederatedEslc::run_round(const TabularMdp& mdp, std::uint64_t run_seed, const InitialStateRule& init,
                                      const EpisodeObserver& observer) {
    RoundOutcome out;
    out.broadcast = make_broadcast(state_);
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(M_));
    for (int m = 0; m < M_; ++m) rngs.push_back(agent_stream(run_seed, m, state_.round));
    auto explored = agent_explore_lockstep(mdp, out.broadcast, M_, rngs, init, observer);
    state_ = aggregate_round(state_, explored.reports, M_, constants_, iota_);
    ledger_.record(round_communication(M_, state_.H, state_.S));
    out.episodes_per_agent = explored.episodes_per_agent;
    out.reports = std::move(explored.reports);
    return out;
}

SingleAgentEslc::SingleAgentEslc(int H, int S, int A, BonusConstants constants, double iota, TieBreak tie_break)
    : constants_(constants), iota_(iota), tie_break_(tie_break), state_(ServerState::initial(H, S, A)) {
    constants_.validate(H);
    if (!(iota > 0.0)) throw std::invalid_argument("iota must be positive");
}

std::int64_t SingleAgentEslc::run_round(const TabularMdp& mdp, std::uint64_t run_seed, const InitialStateRule& init,
                                        const EpisodeObserver& observer) {
    const int H = state_.H, S = state_.S;
    const std::size_t n_s = static_cast<std::size_t>(H) * S;
    Rng rng = agent_stream(run_seed, 0, state_.round);

    std::vector<ReportEntry> local(n_s);
    std::int64_t episodes = 0;
    bool triggered = false;
    while (!triggered) {
        const Trajectory traj = sample_episode(mdp, state_.policy, init.draw(S, rng), rng);
        for (int h = 0; h < H; ++h) {
            const Step& st = traj.steps[static_cast<std::size_t>(h)];
            const std::size_t i = state_.hs(h, st.state);
            kernel::accumulate_next_state(local[i], h, st.next_state, H, state_.v, state_.v_lower, state_.v_ref, S);
            if (local[i].n >= visit_cap(state_.visits[state_.sa(h, st.state, st.action)], 1, H)) triggered = true;
        }
        if (observer) observer(0, traj);
        ++episodes;
    }

    for (int h = 0; h < H; ++h)
        for (int s = 0; s < S; ++s) {
            const auto& e = local[state_.hs(h, s)];
            if (e.n == 0) continue;
            const int a = state_.policy(h, s);
            kernel::TripleRound d;
            d.n = e.n;
            d.reward = mdp.reward(h, s, a);
            d.sums = {e.v, e.v_lower, e.mu_r, e.sigma_r, e.mu_a, e.sigma_a};
            if (e.n == 1) d.single_visits.push_back(d.sums);
            kernel::update_triple(state_, state_.sa(h, s, a), d, 1, constants_, iota_);
        }
    kernel::finish_round(state_, constants_.beta, tie_break_);
    return episodes;
}

std::string checkpoint_to_json(const ServerState& st, std::uint64_t master_seed) {
    nlohmann::json doc;
    doc["H"] = st.H;
    doc["S"] = st.S;
    doc["A"] = st.A;
    doc["round"] = st.round;
    doc["master_seed"] = master_seed;
    doc["q_upper"] = st.q_upper;
    doc["q_lower"] = st.q_lower;
    doc["q_ref"] = st.q_ref;
    doc["q"] = st.q;
    doc["visits"] = st.visits;
    doc["mu_ref"] = st.mu_ref;
    doc["sigma_ref"] = st.sigma_ref;
    doc["mu_adv"] = st.mu_adv;
    doc["sigma_adv"] = st.sigma_adv;
    doc["beta_ref"] = st.beta_ref;
    doc["v"] = st.v;
    doc["v_lower"] = st.v_lower;
    doc["v_ref"] = st.v_ref;
    doc["ref_unsettled"] = st.ref_unsettled;
    doc["policy"] = st.policy.actions();
    return doc.dump() + "\n";
}

ServerState checkpoint_from_json(const std::string& text, std::uint64_t* master_seed) {
    const auto doc = nlohmann::json::parse(text);
    ServerState st = ServerState::initial(doc.at("H"), doc.at("S"), doc.at("A"));
    const std::size_t n_sa = st.q.size(), n_s = st.v.size();
    auto table = [&](const char* key, std::size_t n) {
        auto out = doc.at(key).get<std::vector<double>>();
        if (out.size() != n) throw std::invalid_argument(std::string("checkpoint table has wrong size: ") + key);
        return out;
    };
    st.round = doc.at("round");
    st.q_upper = table("q_upper", n_sa);
    st.q_lower = table("q_lower", n_sa);
    st.q_ref = table("q_ref", n_sa);
    st.q = table("q", n_sa);
    st.visits = doc.at("visits").get<std::vector<std::int64_t>>();
    st.mu_ref = table("mu_ref", n_sa);
    st.sigma_ref = table("sigma_ref", n_sa);
    st.mu_adv = table("mu_adv", n_sa);
    st.sigma_adv = table("sigma_adv", n_sa);
    st.beta_ref = table("beta_ref", n_sa);
    st.v = table("v", n_s);
    st.v_lower = table("v_lower", n_s);
    st.v_ref = table("v_ref", n_s);
    st.ref_unsettled = doc.at("ref_unsettled").get<std::vector<std::uint8_t>>();
    const auto actions = doc.at("policy").get<std::vector<int>>();
    if (st.visits.size() != n_sa || st.ref_unsettled.size() != n_s || actions.size() != n_s)
        throw std::invalid_argument("checkpoint table has wrong size");
    for (int h = 0; h < st.H; ++h)
        for (int s = 0; s < st.S; ++s) st.policy.set(h, s, actions[st.hs(h, s)]);
    if (master_seed) *master_seed = doc.at("master_seed");
    return st;
}

}  // namespace fedrl
