#include <cmath>
#include <queue>

#include "rlrds/branching.hpp"
#include "rlrds/errors.hpp"

namespace rlrds {

namespace {

/// Unnormalized family weights lambda^m / m! for m = 0..L.
std::vector<double> family_weights(double lambda, int L) {
    std::vector<double> w(L + 1);
    w[0] = 1.0;
    for (int m = 1; m <= L; ++m) w[m] = w[m - 1] * lambda / m;
    return w;
}

/// Draw M from the family pmf conditioned on M >= lo.
int draw_family(const std::vector<double>& w, int lo, Rng& rng) {
    const int L = static_cast<int>(w.size()) - 1;
    if (lo >= L) return L;
    double total = 0.0;
    for (int m = lo; m <= L; ++m) total += w[m];
    double t = rng.uniform() * total;
    for (int m = lo; m < L; ++m) {
        t -= w[m];
        if (t < 0) return m;
    }
    return L;
}

struct Pending {
    double time;
    int parent;
    int seq;
    bool operator>(const Pending& o) const {
        if (time != o.time) return time > o.time;
        if (parent != o.parent) return parent > o.parent;
        return seq > o.seq;
    }
};

using PendingQueue = std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>>;

}  // namespace

RolloutStart make_rollout_start(const std::vector<ParticipantRecord>& records, int current, double t_max,
                                double budget, double spent) {
    if (current < 0 || current >= static_cast<int>(records.size()))
        throw InvalidArgument("make_rollout_start: bad participant index");
    RolloutStart st;
    const auto& cur = records[current];
    st.current_x = cur.x;
    st.budget_remaining = budget - spent;
    std::vector<int> kids(current + 1, 0);
    for (int i = 0; i <= current; ++i)
        if (records[i].parent >= 0) kids[records[i].parent] += 1;
    for (int j = 0; j < current; ++j) {
        const auto& r = records[j];
        const double elapsed = cur.arrival_time - r.arrival_time;
        if (r.action < 0 || elapsed >= t_max || kids[j] >= r.coupons) continue;
        st.active.push_back(RolloutStart::Active{r.x, r.action, r.coupons, kids[j], elapsed});
    }
    return st;
}

double simulate_rollout(const BranchingParams& b, const RolloutStart& start, const PolicyParams& alpha,
                        const RolloutOptions& opt, Rng& rng, int* participants) {
    if (participants) *participants = 0;
    const double remaining = start.budget_remaining;
    if (!(remaining > 0)) return 0.0;
    const double min_cost = opt.cost.min_cost();
    long horizon = static_cast<long>(std::floor(remaining / min_cost)) + 1;
    if (opt.horizon >= 0) horizon = std::min<long>(horizon, opt.horizon);
    if (horizon <= 0) return 0.0;

    const auto& spec = b.spec;
    const int maxL = std::max(spec.max_coupons(), 1);
    const std::vector<double> wfull = family_weights(b.lambda, maxL);
    auto weights_for = [&](int L) { return std::vector<double>(wfull.begin(), wfull.begin() + L + 1); };

    std::vector<VectorXd> xs;
    std::vector<int> acts;
    PendingQueue q;
    int seq = 0;

    for (const auto& a : start.active) {
        const double lo = std::max(b.t_min, a.elapsed);
        if (lo >= b.t_max) continue;
        const int m = draw_family(weights_for(a.L), a.recruited, rng);
        if (m <= a.recruited) continue;
        const int idx = static_cast<int>(xs.size());
        xs.push_back(a.x);
        acts.push_back(a.action);
        const double rate = b.arrival_rate(a.action);
        for (int k = a.recruited; k < m; ++k) {
            const double u = truncexp_quantile(rng.uniform(), rate, lo, b.t_max);
            q.push(Pending{u - a.elapsed, idx, seq++});
        }
    }

    auto spawn = [&](const VectorXd& x, int act, double t) {
        const int L = spec.coupons(act, false);
        const int m = draw_family(weights_for(L), 0, rng);
        if (m == 0) return;
        const int idx = static_cast<int>(xs.size());
        xs.push_back(x);
        acts.push_back(act);
        const double rate = b.arrival_rate(act);
        for (int k = 0; k < m; ++k) q.push(Pending{t + truncexp_quantile(rng.uniform(), rate, b.t_min, b.t_max), idx, seq++});
    };

    spawn(start.current_x, score_to_action(spec, start.current_x, alpha), 0.0);

    double value = 0.0;
    double used = 0.0;
    long count = 0;
    while (!q.empty() && count < horizon) {
        const Pending ev = q.top();
        q.pop();
        const int parent_act = acts[ev.parent];
        const VectorXd x = sample_child_covariates(b, xs[ev.parent], parent_act, rng);
        const int act = score_to_action(spec, x, alpha);
        if (used >= remaining) break;
        value += logistic(reward_features(spec, x, parent_act).dot(b.beta_y));
        used += opt.cost(spec, act);
        ++count;
        spawn(x, act, ev.time);
    }
    if (participants) *participants = static_cast<int>(count);
    return value;
}

Trajectory simulate_branching_study(const BranchingParams& b, const VectorXd& seed_mu, const MatrixXd& seed_sigma,
                                    int n0, AllocationPolicy& policy, double budget, std::uint64_t seed) {
    if (n0 < 1) throw InvalidArgument("simulate_branching_study: n0 must be >= 1");
    if (!(budget > 0)) throw InvalidArgument("simulate_branching_study: budget must be positive");
    b.validate();
    const int p = b.p;
    Rng rng(derive_seed(seed, 0));
    Rng policy_rng(derive_seed(seed, 1));

    StudyConfig cfg;
    cfg.spec = b.spec;
    cfg.budget = budget;
    cfg.theta.mu = seed_mu;
    cfg.theta.sigma = seed_sigma;
    cfg.theta.beta_y = b.beta_y;
    cfg.theta.t_min = b.t_min;
    cfg.theta.t_max = b.t_max;
    cfg.theta.seed_count = n0;

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(seed_sigma);
    const MatrixXd f = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    std::vector<VectorXd> seed_x(n0);
    for (int i = 0; i < n0; ++i) {
        VectorXd z(p);
        for (int k = 0; k < p; ++k) z(k) = rng.normal();
        seed_x[i] = seed_mu + f * z;
    }

    std::priority_queue<Event, std::vector<Event>, EventLater> pending;
    for (int i = 0; i < n0; ++i) pending.push(Event{0.0, kSeed, i, -1});
    int next_id = n0;
    Trajectory traj;
    traj.budget = budget;
    double spent = 0.0;
    const int maxL = std::max(b.spec.max_coupons(), 1);
    const std::vector<double> wfull = family_weights(b.lambda, maxL);

    while (!pending.empty()) {
        const Event ev = pending.top();
        pending.pop();
        ParticipantRecord rec;
        rec.id = ev.candidate;
        rec.parent = ev.parent;
        rec.recruiter = ev.parent >= 0 ? traj.records[ev.parent].id : kSeed;
        rec.arrival_time = ev.time;
        const int parent_action = ev.parent >= 0 ? traj.records[ev.parent].action : kNoAction;
        rec.x = ev.parent >= 0 ? sample_child_covariates(b, traj.records[ev.parent].x, parent_action, rng)
                               : seed_x[ev.candidate];
        rec.generation = ev.parent >= 0 ? traj.records[ev.parent].generation + 1 : 0;
        rec.reward = rng.uniform() < logistic(reward_features(b.spec, rec.x, parent_action).dot(b.beta_y)) ? 1 : 0;
        traj.records.push_back(rec);
        const int idx = traj.size() - 1;

        DecisionContext ctx{cfg, traj.records, idx, spent, all_actions(b.spec)};
        const Decision d = policy.decide(ctx, policy_rng);
        auto& cur = traj.records[idx];
        cur.action = d.action;
        cur.coupons = d.coupons;
        cur.selection_prob = d.prob;
        cur.feasible_count = static_cast<int>(ctx.feasible.size());
        cur.cost = cfg.cost(b.spec, d.action);
        traj.log.push_back(DecisionLogEntry{idx, cur.id, ctx.feasible, d.action, d.prob});
        spent += cur.cost;
        if (spent > budget) {
            traj.budget_exhausted = true;
            break;
        }
        const int m = draw_family(std::vector<double>(wfull.begin(), wfull.begin() + cur.coupons + 1), 0, rng);
        const double rate = b.arrival_rate(cur.action);
        for (int k = 0; k < m; ++k) {
            const double u = truncexp_quantile(rng.uniform(), rate, b.t_min, b.t_max);
            pending.push(Event{cur.arrival_time + u, cur.id, next_id++, idx});
        }
    }
    traj.spent = spent;
    return traj;
}

}  // namespace rlrds
