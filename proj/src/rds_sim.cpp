#include "rlrds/rds_sim.hpp"

#include <cstdio>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rlrds/errors.hpp"

namespace rlrds {

double Trajectory::cumulative_reward() const {
    double total = 0.0;
    for (const auto& r : records)
        if (r.recruiter != kSeed) total += r.reward;
    return total;
}

std::vector<int> all_actions(const ActionSpaceSpec& spec) {
    std::vector<int> a(spec.num_actions());
    std::iota(a.begin(), a.end(), 0);
    return a;
}

StudyState seed_sample(const Population& pop, int n0, Rng& rng, std::uint64_t outcome_seed) {
    const int n = pop.size();
    if (n0 < 1 || n0 > n) throw InvalidArgument("seed count must be in [1, N]");
    StudyState s;
    s.recruited.assign(n, 0);
    s.reward_seed = derive_seed(outcome_seed, 0);
    s.time_seed = derive_seed(outcome_seed, 1);
    // Partial Fisher-Yates.
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    for (int k = 0; k < n0; ++k) {
        const int j = k + rng.uniform_int(n - k);
        std::swap(ids[k], ids[j]);
        s.pending.push(Event{0.0, kSeed, ids[k], -1});
    }
    return s;
}

namespace {

/// Sequential draws without replacement, renormalizing after each pick.
std::vector<int> draw_recruits(const std::vector<int>& m1, const VectorXd& weights, int cap, Rng& rng) {
    if (static_cast<int>(m1.size()) <= cap) return m1;
    std::vector<int> pool = m1;
    std::vector<double> w(weights.data(), weights.data() + weights.size());
    std::vector<int> out;
    out.reserve(cap);
    for (int k = 0; k < cap; ++k) {
        double total = 0.0;
        for (double v : w) total += v;
        std::size_t pick = 0;
        if (total > 0) {
            double target = rng.uniform() * total;
            for (pick = 0; pick + 1 < w.size(); ++pick) {
                target -= w[pick];
                if (target < 0) break;
            }
        } else {
            pick = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(pool.size())));
        }
        out.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

}  // namespace

bool process_arrival(StudyState& state, const Population& pop, const StudyConfig& cfg, AllocationPolicy& policy,
                     Rng& rng, Rng& policy_rng) {
    if (state.pending.empty() || state.budget_exhausted) return false;
    const Event ev = state.pending.top();
    state.pending.pop();
    if (state.recruited[ev.candidate]) return true;  // duplicate coupon, discarded at no cost
    state.recruited[ev.candidate] = 1;

    const auto& spec = cfg.spec;
    const auto& theta = cfg.theta;
    ParticipantRecord rec;
    rec.id = ev.candidate;
    rec.recruiter = ev.recruiter;
    rec.parent = ev.parent;
    rec.arrival_time = ev.time;
    rec.x = pop.x(ev.candidate);
    const int parent_action = ev.parent >= 0 ? state.records[ev.parent].action : kNoAction;
    rec.generation = ev.parent >= 0 ? state.records[ev.parent].generation + 1 : 0;
    const double py = logistic(reward_features(spec, rec.x, parent_action).dot(theta.beta_y));
    rec.reward = hash_uniform(state.reward_seed, static_cast<std::uint64_t>(rec.id), 0) < py ? 1 : 0;
    state.records.push_back(rec);
    const int idx = static_cast<int>(state.records.size()) - 1;

    DecisionContext ctx{cfg, state.records, idx, state.spent, all_actions(spec)};
    const Decision d = policy.decide(ctx, policy_rng);
    if (d.action < 0 || d.action >= spec.num_actions()) throw ContractViolation("policy returned an infeasible action");
    if (!(d.prob > 0)) throw ContractViolation("policy returned a zero selection probability");
    auto& cur = state.records[idx];
    cur.action = d.action;
    cur.coupons = d.coupons;
    cur.selection_prob = d.prob;
    cur.feasible_count = static_cast<int>(ctx.feasible.size());
    cur.cost = cfg.cost(spec, d.action);
    state.log.push_back(DecisionLogEntry{idx, cur.id, ctx.feasible, d.action, d.prob});

    state.spent += cur.cost;
    if (state.spent > state.budget) {
        // The participant who crosses the budget is enrolled; the study ends before coupons go out.
        state.budget_exhausted = true;
        return true;
    }

    std::vector<int> m1;
    for (int j : pop.neighbors(cur.id))
        if (!state.recruited[j]) m1.push_back(j);
    if (m1.empty() || cur.coupons <= 0) return true;

    RowMatrixXd cand(static_cast<Eigen::Index>(m1.size()), pop.dim());
    for (std::size_t k = 0; k < m1.size(); ++k) cand.row(static_cast<Eigen::Index>(k)) = pop.covariates().row(m1[k]);
    const VectorXd w = neighbor_selection_probs(cur.x, cand, cur.action, theta.neighbor_rule);
    const std::vector<int> m2 = draw_recruits(m1, w, cur.coupons, rng);

    const double rate = theta.arrival_rate(spec.value(cur.action));
    for (int c : m2) {
        const double u = hash_uniform(state.time_seed, static_cast<std::uint64_t>(cur.id), static_cast<std::uint64_t>(c));
        const double offset = truncexp_quantile(u, rate, theta.t_min, theta.t_max);
        state.pending.push(Event{cur.arrival_time + offset, cur.id, c, idx});
    }
    return true;
}

Trajectory run_study(const Population& pop, const StudyConfig& cfg, AllocationPolicy& policy, std::uint64_t seed) {
    if (!(cfg.budget > 0)) throw InvalidArgument("budget must be positive");
    cfg.theta.validate_for(cfg.spec);
    if (pop.dim() != cfg.theta.dim()) throw InvalidArgument("population dimension does not match theta");
    Rng seed_rng(derive_seed(seed, 0));
    StudyState state = seed_sample(pop, std::min(cfg.theta.seed_count, pop.size()), seed_rng, derive_seed(seed, 1));
    state.budget = cfg.budget;
    Rng rng(derive_seed(seed, 2));
    Rng policy_rng(derive_seed(seed, 3));
    while (process_arrival(state, pop, cfg, policy, rng, policy_rng)) {
    }
    Trajectory t;
    t.records = std::move(state.records);
    t.log = std::move(state.log);
    t.budget = state.budget;
    t.spent = state.spent;
    t.budget_exhausted = state.budget_exhausted;
    return t;
}

EpochPartition epoch_partition(const Trajectory& traj, double t_max) {
    if (traj.records.empty()) throw InvalidArgument("epoch_partition: empty trajectory");
    EpochPartition ep;
    for (int i = 0; i < traj.size(); ++i) {
        const int g = traj.records[i].generation;
        if (g >= static_cast<int>(ep.epochs.size())) ep.epochs.resize(g + 1);
        ep.epochs[g].push_back(i);
    }
    const double t_end = traj.end_time();
    double expiry = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ep.epochs.size(); ++j) {
        bool complete = true;
        double latest = expiry;
        for (int i : ep.epochs[j]) {
            const double e = traj.records[i].arrival_time + t_max;
            complete = complete && e < t_end;
            latest = std::max(latest, e);
        }
        if (!complete) break;
        ep.last_complete = static_cast<int>(j);
        expiry = latest;
    }
    if (ep.last_complete >= 0) {
        ep.n_J = traj.size();
        for (int i = 0; i < traj.size(); ++i) {
            if (traj.records[i].arrival_time > expiry) {
                ep.n_J = i + 1;
                break;
            }
        }
    }
    return ep;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const int p = traj.records.empty() ? 0 : static_cast<int>(traj.records.front().x.size());
    os << "id,recruiter,parent,arrival_time";
    for (int k = 0; k < p; ++k) os << ",x" << (k + 1);
    os << ",reward,action,coupons,cost,generation,selection_prob,feasible_count\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : traj.records) {
        os << r.id << ',' << r.recruiter << ',' << r.parent << ',' << num(r.arrival_time);
        for (int k = 0; k < p; ++k) os << ',' << num(r.x(k));
        os << ',' << r.reward << ',' << r.action << ',' << r.coupons << ',' << num(r.cost) << ',' << r.generation
           << ',' << num(r.selection_prob) << ',' << r.feasible_count << '\n';
    }
}

Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("trajectory csv: missing header");
    int cols = 1;
    for (char c : line) cols += (c == ',');
    const int p = cols - 11;
    if (p < 1) throw InvalidArgument("trajectory csv: unexpected header");
    Trajectory t;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (static_cast<int>(f.size()) != cols) throw InvalidArgument("trajectory csv: ragged row");
        try {
            ParticipantRecord r;
            r.id = std::stoi(f[0]);
            r.recruiter = std::stoi(f[1]);
            r.parent = std::stoi(f[2]);
            r.arrival_time = std::stod(f[3]);
            r.x.resize(p);
            for (int k = 0; k < p; ++k) r.x(k) = std::stod(f[4 + k]);
            r.reward = std::stoi(f[4 + p]);
            r.action = std::stoi(f[5 + p]);
            r.coupons = std::stoi(f[6 + p]);
            r.cost = std::stod(f[7 + p]);
            r.generation = std::stoi(f[8 + p]);
            r.selection_prob = std::stod(f[9 + p]);
            r.feasible_count = std::stoi(f[10 + p]);
            t.records.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw InvalidArgument("trajectory csv: malformed number");
        }
    }
    for (int i = 0; i < t.size(); ++i) {
        const auto& r = t.records[i];
        if (r.parent >= i) throw InvalidArgument("trajectory csv: parent must precede child");
        if (r.action >= 0) {
            std::vector<int> feas(r.feasible_count);
            std::iota(feas.begin(), feas.end(), 0);
            t.log.push_back(DecisionLogEntry{i, r.id, feas, r.action, r.selection_prob});
        }
        t.spent += r.cost;
    }
    return t;
}

}  // namespace rlrds
