#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

namespace rlrds {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kNoAction = -1;

inline double logistic(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) {
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

enum class ActionVariant { type_choice, value_grid, count_grid };
enum class RewardDesign { type_interactions, value_interactions, main_effects };
enum class ModelFamily { type_model, value_model };

std::string to_string(ActionVariant v);
std::string to_string(ModelFamily f);
ActionVariant parse_action_variant(const std::string& s);
ModelFamily parse_model_family(const std::string& s);

/// What a coupon allocation means. Actions are indices 0..num_actions()-1.
///   type_choice: coupon types a1, a2, a3
///   value_grid:  incentive values 0.1, 0.2, ..., 1.0
///   count_grid:  package sizes 1..max_count
struct ActionSpaceSpec {
    ActionVariant variant = ActionVariant::type_choice;
    double t_lo = 0.33;
    double t_hi = 0.66;
    int value_levels = 10;
    int max_count = 7;
    int warmup_coupons = 2;
    int main_coupons = 5;

    void validate() const;
    int num_actions() const;
    /// Incentive value in [0,1]; zero outside the value paradigm.
    double value(int action) const;
    int coupons(int action, bool warmup) const;
    int max_coupons() const;
    /// Covariate-model group of an allocation (type model only).
    int covariate_group(int action) const;
    int num_groups() const;
    RewardDesign reward_design() const;
    ModelFamily family() const;
};

/// Policy index alpha = (alpha0, alpha1); score s = logistic(alpha0 + x'alpha1).
struct PolicyParams {
    double alpha0 = 0.0;
    VectorXd alpha1;
    double score(const VectorXd& x) const { return logistic(alpha0 + x.dot(alpha1)); }
};

/// Maps the logistic score to an allocation per the action-space variant.
int score_to_action(const ActionSpaceSpec& spec, double s);
int score_to_action(const ActionSpaceSpec& spec, const VectorXd& x, const PolicyParams& alpha);

int reward_dim(RewardDesign design, int p);

/// Truncated exponential with rate zeta on [a, b]; rate may be any positive value.
double truncexp_logpdf(double u, double zeta, double a, double b);
/// Inverse-CDF draw from a uniform in [0,1).
double truncexp_quantile(double uniform, double zeta, double a, double b);
double truncexp_mean(double zeta, double a, double b);

/// Reward features of a recruit with covariates x, recruited under the
/// recruiter's action (kNoAction for seeds: allocation terms are zero).
VectorXd reward_features(const ActionSpaceSpec& spec, const VectorXd& x, int parent_action);

}  // namespace rlrds
