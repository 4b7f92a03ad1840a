#include "rlrds/policy.hpp"

#include <cmath>
#include <exception>

#include "rlrds/errors.hpp"

namespace rlrds {

std::vector<PolicyParams> alpha_grid(int p, const std::vector<double>& levels) {
    if (levels.empty()) throw InvalidArgument("alpha_grid: no levels");
    const int k = static_cast<int>(levels.size());
    long total = 1;
    for (int d = 0; d <= p; ++d) total *= k;
    std::vector<PolicyParams> grid;
    grid.reserve(total);
    for (long idx = 0; idx < total; ++idx) {
        PolicyParams a;
        a.alpha1.resize(p);
        long rest = idx;
        for (int d = p; d >= 1; --d) {
            a.alpha1(d - 1) = levels[rest % k];
            rest /= k;
        }
        a.alpha0 = levels[rest % k];
        grid.push_back(a);
    }
    return grid;
}

double estimate_value(const RolloutStart& start, const PolicyParams& alpha, const BranchingParams& beta, int B,
                      std::uint64_t seed, const RolloutOptions& opt) {
    if (B < 1) throw InvalidArgument("estimate_value: B must be >= 1");
    if (!(start.budget_remaining > 0)) return 0.0;
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        total += simulate_rollout(beta, start, alpha, opt, rng);
    }
    return total / B;
}

namespace {

SearchResult pick(std::vector<double> values) {
    SearchResult r;
    r.values = std::move(values);
    for (std::size_t i = 1; i < r.values.size(); ++i)
        if (r.values[i] > r.values[r.index]) r.index = static_cast<int>(i);
    return r;
}

}  // namespace

SearchResult policy_search(const RolloutStart& start, const BranchingParams& beta, int B,
                           const std::vector<PolicyParams>& grid, std::uint64_t seed, const RolloutOptions& opt) {
    if (grid.empty()) throw InvalidArgument("policy_search: empty grid");
    const int n = static_cast<int>(grid.size());
    std::vector<double> v(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) v[i] = estimate_value(start, grid[i], beta, B, seed, opt);
    return pick(std::move(v));
}

SearchResult policy_search_serial(const RolloutStart& start, const BranchingParams& beta, int B,
                                  const std::vector<PolicyParams>& grid, std::uint64_t seed,
                                  const RolloutOptions& opt) {
    if (grid.empty()) throw InvalidArgument("policy_search: empty grid");
    std::vector<double> v;
    v.reserve(grid.size());
    for (const auto& a : grid) v.push_back(estimate_value(start, a, beta, B, seed, opt));
    return pick(std::move(v));
}

std::vector<double> clip_probs(const std::vector<double>& xi, double eps) {
    if (!(eps > 0 && eps < 1)) throw InvalidArgument("clip_probs: eps must be in (0,1)");
    std::vector<double> p(xi.size());
    double total = 0.0;
    for (std::size_t a = 0; a < xi.size(); ++a) {
        p[a] = std::min(1.0 - eps, std::max(eps, xi[a]));
        total += p[a];
    }
    for (auto& v : p) v /= total;
    return p;
}

std::pair<double, double> clip_bounds(double eps, int num_actions) {
    return {eps / ((1.0 - eps) * num_actions), (1.0 - eps) / (1.0 + (num_actions - 2) * eps)};
}

ThompsonResult thompson_from_actions(const std::vector<int>& optimal_actions, int num_actions, double eps, Rng& rng) {
    if (optimal_actions.empty()) throw InvalidArgument("thompson: no posterior draws");
    ThompsonResult r;
    r.xi.assign(num_actions, 0.0);
    for (int a : optimal_actions) r.xi.at(a) += 1.0;
    for (auto& v : r.xi) v /= static_cast<double>(optimal_actions.size());
    r.probs = clip_probs(r.xi, eps);
    double t = rng.uniform();
    r.action = num_actions - 1;
    for (int a = 0; a < num_actions; ++a) {
        t -= r.probs[a];
        if (t < 0) {
            r.action = a;
            break;
        }
    }
    return r;
}

namespace {

/// Optimal grid index for every draw; (draw, candidate) pairs run in parallel.
std::vector<int> search_all(const RolloutStart& start, const std::vector<BranchingParams>& draws,
                            const std::vector<PolicyParams>& grid, int B, std::uint64_t seed,
                            const RolloutOptions& opt) {
    const int nd = static_cast<int>(draws.size());
    const int ng = static_cast<int>(grid.size());
    std::vector<double> v(static_cast<std::size_t>(nd) * ng);
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < nd * ng; ++k) {
        const int d = k / ng, c = k % ng;
        v[k] = estimate_value(start, grid[c], draws[d], B, derive_seed(seed, static_cast<std::uint64_t>(d)), opt);
    }
    std::vector<int> best(nd, 0);
    for (int d = 0; d < nd; ++d)
        for (int c = 1; c < ng; ++c)
            if (v[static_cast<std::size_t>(d) * ng + c] > v[static_cast<std::size_t>(d) * ng + best[d]]) best[d] = c;
    return best;
}

Decision uniform_decision(const DecisionContext& ctx, Rng& rng, bool warmup) {
    const int k = static_cast<int>(ctx.feasible.size());
    if (k == 0) throw ContractViolation("empty feasible allocation set");
    Decision d;
    d.action = ctx.feasible[rng.uniform_int(k)];
    d.prob = 1.0 / k;
    d.coupons = ctx.config.spec.coupons(d.action, warmup);
    return d;
}

Trajectory history(const DecisionContext& ctx) {
    Trajectory t;
    t.records.assign(ctx.records.begin(), ctx.records.begin() + ctx.current + 1);
    return t;
}

FitResult fit_with_fallback(const WeightedSample& s, const ActionSpaceSpec& spec, int p, const NetworkParams& th,
                            FitOptions opt) {
    try {
        return fit_wmle(s, spec, p, th.t_min, th.t_max, opt);
    } catch (const NumericalError&) {
    }
    opt.ridge = std::max(opt.ridge, 1e-3);
    try {
        return fit_wmle(s, spec, p, th.t_min, th.t_max, opt);
    } catch (const NumericalError&) {
    }
    // full covariance needs 2p+1 recruits per group; early on only the diagonal is estimable
    opt.diagonal = true;
    return fit_wmle(s, spec, p, th.t_min, th.t_max, opt);
}

}  // namespace

ThompsonResult thompson_select(const RolloutStart& start, const std::vector<BranchingParams>& draws,
                               const std::vector<PolicyParams>& grid, int B, double eps, std::uint64_t seed, Rng& rng,
                               const RolloutOptions& opt) {
    if (draws.empty()) throw InvalidArgument("thompson_select: no draws");
    const auto best = search_all(start, draws, grid, B, seed, opt);
    std::vector<int> actions;
    for (int i : best) actions.push_back(score_to_action(draws.front().spec, start.current_x, grid[i]));
    return thompson_from_actions(actions, draws.front().spec.num_actions(), eps, rng);
}

Decision FixedPolicy::decide(const DecisionContext& ctx, Rng& rng) {
    for (int a : ctx.feasible)
        if (a == action_) return Decision{action_, 1.0, ctx.config.spec.coupons(action_, false)};
    return uniform_decision(ctx, rng, false);
}

std::string FixedPolicy::name() const { return "fixed:" + std::to_string(action_); }

Decision RandomPolicy::decide(const DecisionContext& ctx, Rng& rng) { return uniform_decision(ctx, rng, warmup_); }

Decision TrainAndImplementPolicy::decide(const DecisionContext& ctx, Rng& rng) {
    const auto& cfg = ctx.config;
    if (!trained_ && !failed_ && ctx.spent < pilot_fraction_ * cfg.budget) return uniform_decision(ctx, rng, true);
    if (!trained_ && !failed_) {
        try {
            const WeightedSample s = build_sample(history(ctx), cfg.theta.t_min, cfg.theta.t_max, SampleView::online);
            FitOptions fo;
            fo.ridge = s_.ridge;
            fo.reward_ridge = s_.reward_ridge;
            const FitResult fit = fit_with_fallback(s, cfg.spec, cfg.theta.dim(), cfg.theta, fo);
            const RolloutStart start =
                make_rollout_start(ctx.records, ctx.current, cfg.theta.t_max, cfg.budget, ctx.spent + cfg.cost.base);
            const auto grid = alpha_grid(cfg.theta.dim(), s_.alpha_levels);
            RolloutOptions ro{s_.horizon, cfg.cost};
            alpha_ = grid[policy_search(start, fit.params, s_.rollouts, grid, rng.next(), ro).index];
            trained_ = true;
        } catch (const std::exception&) {
            failed_ = true;
        }
    }
    if (!trained_) return uniform_decision(ctx, rng, false);
    for (int a = score_to_action(cfg.spec, ctx.records[ctx.current].x, alpha_); int f : ctx.feasible)
        if (f == a) return Decision{a, 1.0, cfg.spec.coupons(a, false)};
    return uniform_decision(ctx, rng, false);
}

Decision RlRdsPolicy::decide(const DecisionContext& ctx, Rng& rng) {
    const auto& cfg = ctx.config;
    if (ctx.current < warmup_n_) return uniform_decision(ctx, rng, true);
    if (cached_.empty() || since_refit_ >= s_.refit_every) {
        since_refit_ = 0;
        cached_.clear();
        try {
            const int p = cfg.theta.dim();
            const WeightedSample s =
                build_sample(history(ctx), cfg.theta.t_min, cfg.theta.t_max, SampleView::online, true);
            FitOptions fo;
            fo.ridge = s_.ridge;
            fo.reward_ridge = s_.reward_ridge;
            const FitResult fit = fit_with_fallback(s, cfg.spec, p, cfg.theta, fo);
            FitOptions bo = fo;
            bo.ridge = std::max(fo.ridge, fit.report.ridge);
            bo.diagonal = fit.params.diagonal;
            const auto draws = generalized_bootstrap(s, cfg.spec, p, cfg.theta.t_min, cfg.theta.t_max,
                                                     s_.bootstrap_draws, rng.next(), bo);
            const RolloutStart start =
                make_rollout_start(ctx.records, ctx.current, cfg.theta.t_max, cfg.budget, ctx.spent + cfg.cost.base);
            const auto grid = alpha_grid(p, s_.alpha_levels);
            const auto best = search_all(start, draws, grid, s_.rollouts, rng.next(), RolloutOptions{s_.horizon, cfg.cost});
            for (int i : best) cached_.push_back(grid[i]);
            ++refits_;
        } catch (const std::exception&) {
            cached_.clear();
        }
    }
    ++since_refit_;
    if (cached_.empty()) {
        ++fallbacks_;
        return uniform_decision(ctx, rng, false);
    }
    std::vector<int> actions;
    actions.reserve(cached_.size());
    for (const auto& a : cached_) actions.push_back(score_to_action(cfg.spec, ctx.records[ctx.current].x, a));
    const ThompsonResult t = thompson_from_actions(actions, cfg.spec.num_actions(), s_.epsilon, rng);
    return Decision{t.action, t.prob(), cfg.spec.coupons(t.action, false)};
}

std::unique_ptr<AllocationPolicy> make_policy(const std::string& name, const ActionSpaceSpec& spec, int warmup_n,
                                              const LearnerSettings& s) {
    if (name == "random") return std::make_unique<RandomPolicy>(false);
    if (name == "rl_rds") return std::make_unique<RlRdsPolicy>(warmup_n, s);
    if (name == "train_and_implement") return std::make_unique<TrainAndImplementPolicy>(0.5, s);
    if (name.rfind("fixed:", 0) == 0) {
        const std::string arg = name.substr(6);
        const int top = spec.num_actions() - 1;
        int a = -1;
        if (arg == "min") a = 0;
        else if (arg == "max") a = top;
        else if (arg == "half") {
            // floor(max / 2) in allocation units
            if (spec.variant == ActionVariant::count_grid) a = spec.max_count / 2 - 1;
            else if (spec.variant == ActionVariant::value_grid) a = spec.value_levels / 2 - 1;
            else a = 1;
        } else {
            try {
                a = std::stoi(arg);
            } catch (const std::exception&) {
                throw InvalidArgument("bad fixed policy: " + name);
            }
        }
        if (a < 0 || a > top) throw InvalidArgument("fixed policy action out of range: " + name);
        return std::make_unique<FixedPolicy>(a);
    }
    throw InvalidArgument("unknown policy: " + name);
}

}  // namespace rlrds
