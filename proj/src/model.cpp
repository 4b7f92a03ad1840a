#include "rlrds/model.hpp"

#include <algorithm>
#include <limits>

#include "rlrds/errors.hpp"

namespace rlrds {

std::string to_string(ActionVariant v) {
    switch (v) {
        case ActionVariant::type_choice: return "type_choice";
        case ActionVariant::value_grid: return "value_grid";
        case ActionVariant::count_grid: return "count_grid";
    }
    return "?";
}

std::string to_string(ModelFamily f) {
    return f == ModelFamily::type_model ? "type_model" : "value_model";
}

ActionVariant parse_action_variant(const std::string& s) {
    if (s == "type_choice") return ActionVariant::type_choice;
    if (s == "value_grid") return ActionVariant::value_grid;
    if (s == "count_grid") return ActionVariant::count_grid;
    throw InvalidArgument("unknown action variant: " + s);
}

ModelFamily parse_model_family(const std::string& s) {
    if (s == "type_model") return ModelFamily::type_model;
    if (s == "value_model") return ModelFamily::value_model;
    throw InvalidArgument("unknown model family: " + s);
}

void ActionSpaceSpec::validate() const {
    if (!(0 < t_lo && t_lo < t_hi && t_hi < 1)) throw InvalidArgument("thresholds must satisfy 0 < t_lo < t_hi < 1");
    if (value_levels < 1) throw InvalidArgument("value_levels must be >= 1");
    if (max_count < 1) throw InvalidArgument("max_count must be >= 1");
    if (warmup_coupons < 1 || main_coupons < 1) throw InvalidArgument("coupon counts must be >= 1");
}

int ActionSpaceSpec::num_actions() const {
    switch (variant) {
        case ActionVariant::type_choice: return 3;
        case ActionVariant::value_grid: return value_levels;
        case ActionVariant::count_grid: return max_count;
    }
    return 0;
}

double ActionSpaceSpec::value(int action) const {
    if (variant != ActionVariant::value_grid || action < 0) return 0.0;
    return static_cast<double>(action + 1) / value_levels;
}

int ActionSpaceSpec::coupons(int action, bool warmup) const {
    if (action < 0) return 0;
    if (variant == ActionVariant::count_grid) return action + 1;
    return warmup ? warmup_coupons : main_coupons;
}

int ActionSpaceSpec::max_coupons() const {
    if (variant == ActionVariant::count_grid) return max_count;
    return std::max(warmup_coupons, main_coupons);
}

int ActionSpaceSpec::covariate_group(int action) const {
    return variant == ActionVariant::type_choice ? action : 0;
}

int ActionSpaceSpec::num_groups() const {
    return variant == ActionVariant::type_choice ? 3 : 1;
}

RewardDesign ActionSpaceSpec::reward_design() const {
    switch (variant) {
        case ActionVariant::type_choice: return RewardDesign::type_interactions;
        case ActionVariant::value_grid: return RewardDesign::value_interactions;
        case ActionVariant::count_grid: return RewardDesign::main_effects;
    }
    return RewardDesign::main_effects;
}

ModelFamily ActionSpaceSpec::family() const {
    return variant == ActionVariant::value_grid ? ModelFamily::value_model : ModelFamily::type_model;
}

int score_to_action(const ActionSpaceSpec& spec, double s) {
    switch (spec.variant) {
        case ActionVariant::type_choice:
            if (s > spec.t_hi) return 0;
            if (s >= spec.t_lo) return 1;
            return 2;
        case ActionVariant::value_grid: {
            // value floor(L s + 1/2) / L, clamped to the grid {1/L, ..., 1}
            const int level = static_cast<int>(std::floor(spec.value_levels * s + 0.5));
            return std::clamp(level, 1, spec.value_levels) - 1;
        }
        case ActionVariant::count_grid: {
            const int count = static_cast<int>(std::floor(spec.max_count * s + 0.5));
            return std::clamp(count, 1, spec.max_count) - 1;
        }
    }
    return 0;
}

int score_to_action(const ActionSpaceSpec& spec, const VectorXd& x, const PolicyParams& alpha) {
    return score_to_action(spec, alpha.score(x));
}

int reward_dim(RewardDesign design, int p) {
    switch (design) {
        case RewardDesign::type_interactions: return 1 + 3 * p;
        case RewardDesign::value_interactions: return 2 + 2 * p;
        case RewardDesign::main_effects: return 1 + p;
    }
    return 0;
}

double truncexp_logpdf(double u, double zeta, double a, double b) {
    if (!(zeta > 0) || !(b > a)) throw InvalidArgument("truncexp: need zeta > 0 and a < b");
    if (u < a || u > b) return -std::numeric_limits<double>::infinity();
    // log(e^{-zeta a} - e^{-zeta b}) = -zeta a + log(1 - e^{-zeta (b - a)})
    const double log_norm = -zeta * a + std::log(-std::expm1(-zeta * (b - a)));
    return std::log(zeta) - zeta * u - log_norm;
}

double truncexp_quantile(double uniform, double zeta, double a, double b) {
    const double t = a - std::log1p(uniform * std::expm1(-zeta * (b - a))) / zeta;
    return std::clamp(t, a, b);
}

double truncexp_mean(double zeta, double a, double b) {
    // E[U] = a + 1/zeta - (b - a) e^{-zeta (b-a)} / (1 - e^{-zeta (b-a)})
    const double w = b - a;
    return a + 1.0 / zeta + w * std::exp(-zeta * w) / std::expm1(-zeta * w);
}

VectorXd reward_features(const ActionSpaceSpec& spec, const VectorXd& x, int parent_action) {
    const int p = static_cast<int>(x.size());
    const RewardDesign design = spec.reward_design();
    VectorXd z = VectorXd::Zero(reward_dim(design, p));
    z(0) = 1.0;
    switch (design) {
        case RewardDesign::type_interactions:
            z.segment(1, p) = x;
            if (parent_action == 1) z.segment(1 + p, p) = x;
            if (parent_action == 2) z.segment(1 + 2 * p, p) = x;
            break;
        case RewardDesign::value_interactions: {
            const double a = spec.value(parent_action);
            z(1) = a;
            z.segment(2, p) = x;
            z.segment(2 + p, p) = a * x;
            break;
        }
        case RewardDesign::main_effects:
            z.segment(1, p) = x;
            break;
    }
    return z;
}

}  // namespace rlrds
