#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rlrds/branching.hpp"
#include "rlrds/rds_sim.hpp"

namespace rlrds {

/// 3^(p+1) lattice on levels^(p+1), alpha0 varying slowest.
std::vector<PolicyParams> alpha_grid(int p, const std::vector<double>& levels = {-2.0, 0.0, 2.0});

/// Mean of B rollouts; rollout b uses stream (seed, b), so equal seeds give common random numbers.
double estimate_value(const RolloutStart& start, const PolicyParams& alpha, const BranchingParams& beta, int B,
                      std::uint64_t seed, const RolloutOptions& opt = {});

struct SearchResult {
    int index = 0;
    std::vector<double> values;
};

/// Grid argmax of estimate_value with one seed shared by every candidate; ties go to the lowest index.
SearchResult policy_search(const RolloutStart& start, const BranchingParams& beta, int B,
                           const std::vector<PolicyParams>& grid, std::uint64_t seed, const RolloutOptions& opt = {});
SearchResult policy_search_serial(const RolloutStart& start, const BranchingParams& beta, int B,
                                  const std::vector<PolicyParams>& grid, std::uint64_t seed,
                                  const RolloutOptions& opt = {});

/// min(1-eps, max(eps, xi)) normalized.
std::vector<double> clip_probs(const std::vector<double>& xi, double eps);
/// Two-sided bound on clipped-and-normalized probabilities.
std::pair<double, double> clip_bounds(double eps, int num_actions);

struct ThompsonResult {
    int action = 0;
    std::vector<double> xi;
    std::vector<double> probs;
    double prob() const { return probs[action]; }
};

/// Selection from the optimal action of each posterior draw.
ThompsonResult thompson_from_actions(const std::vector<int>& optimal_actions, int num_actions, double eps, Rng& rng);

/// Full step: policy search per bootstrap draw, then clipped Thompson selection.
ThompsonResult thompson_select(const RolloutStart& start, const std::vector<BranchingParams>& draws,
                               const std::vector<PolicyParams>& grid, int B, double eps, std::uint64_t seed, Rng& rng,
                               const RolloutOptions& opt = {});

class FixedPolicy : public AllocationPolicy {
public:
    explicit FixedPolicy(int action) : action_(action) {}
    Decision decide(const DecisionContext& ctx, Rng& rng) override;
    std::string name() const override;

private:
    int action_;
};

class RandomPolicy : public AllocationPolicy {
public:
    explicit RandomPolicy(bool warmup_coupons = false) : warmup_(warmup_coupons) {}
    Decision decide(const DecisionContext& ctx, Rng& rng) override;
    std::string name() const override { return "random"; }

private:
    bool warmup_;
};

struct LearnerSettings {
    int rollouts = 100;      // B
    int bootstrap_draws = 50;
    int refit_every = 1;
    int horizon = -1;        // rollout horizon cap, -1 = remaining budget
    double epsilon = 0.1;
    double reward_ridge = 1.0;
    double ridge = 0.0;
    std::vector<double> alpha_levels{-2.0, 0.0, 2.0};
};

/// Random pilot over a fraction of the budget, one fit and policy search, then frozen.
class TrainAndImplementPolicy : public AllocationPolicy {
public:
    TrainAndImplementPolicy(double pilot_fraction, LearnerSettings s) : pilot_fraction_(pilot_fraction), s_(std::move(s)) {}
    Decision decide(const DecisionContext& ctx, Rng& rng) override;
    std::string name() const override { return "train_and_implement"; }
    bool trained() const { return trained_; }
    const PolicyParams& alpha() const { return alpha_; }

private:
    double pilot_fraction_;
    LearnerSettings s_;
    bool trained_ = false;
    bool failed_ = false;
    PolicyParams alpha_;
};

/// Random warm-up, then weighted refit + generalized bootstrap + clipped Thompson sampling.
class RlRdsPolicy : public AllocationPolicy {
public:
    RlRdsPolicy(int warmup_n, LearnerSettings s) : warmup_n_(warmup_n), s_(std::move(s)) {}
    Decision decide(const DecisionContext& ctx, Rng& rng) override;
    std::string name() const override { return "rl_rds"; }
    int refits() const { return refits_; }
    int fallbacks() const { return fallbacks_; }

private:
    int warmup_n_;
    LearnerSettings s_;
    std::vector<PolicyParams> cached_;
    int since_refit_ = 0;
    int refits_ = 0;
    int fallbacks_ = 0;
};

/// "fixed:<a>", "random", "train_and_implement", "rl_rds".
std::unique_ptr<AllocationPolicy> make_policy(const std::string& name, const ActionSpaceSpec& spec, int warmup_n,
                                              const LearnerSettings& s);

}  // namespace rlrds
