#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlrds/model.hpp"
#include "rlrds/rds_sim.hpp"
#include "rlrds/rng.hpp"

namespace rlrds {

/// Recruit-covariate model of one allocation group (type model):
/// x_child ~ Normal(phi + G x_parent, Sigma), Sigma = L L'.
struct CovariateGroup {
    VectorXd phi;
    MatrixXd G;
    MatrixXd sigma_chol;
    MatrixXd sigma() const { return sigma_chol * sigma_chol.transpose(); }
};

/// Working-model parameter beta in either family.
/// Type model: lambda, zeta, groups[], beta_y.
/// Value model: lambda, (zeta0, zeta1), phi0, phi1, omega0, omega1 (diagonal precisions), beta_y.
struct BranchingParams {
    ModelFamily family = ModelFamily::type_model;
    ActionSpaceSpec spec;
    int p = 0;
    double t_min = 0.0;
    double t_max = 3.0;
    bool diagonal = false;

    double lambda = 1.0;
    double zeta = 1.0;
    std::vector<CovariateGroup> groups;

    double zeta0 = 1.0;
    double zeta1 = 0.0;
    VectorXd phi0;
    double phi1 = 0.0;
    VectorXd omega0;
    VectorXd omega1;

    VectorXd beta_y;

    /// Neutral starting point (phi = 0, G = 0, Sigma = I, lambda = zeta = 1, beta_y = 0).
    static BranchingParams initial(const ActionSpaceSpec& spec, int p, double t_min, double t_max, bool diagonal);

    double arrival_rate(int action) const { return family == ModelFamily::type_model ? zeta : zeta0 + zeta1 * spec.value(action); }
    void validate() const;
};

/// Offsets into the flat coordinate vector used by loglik/score/hessian.
///   type model:  [beta_y][per group: vec Gamma (col-major), Omega (p*p, or p if diagonal)][zeta][tau]
///   value model: [beta_y][phi0, phi1, omega0, omega1][zeta0, zeta1][tau]
/// Gamma = Sigma^{-1}[phi | G], Omega = -Sigma^{-1}/2, tau = log lambda.
struct FlatLayout {
    int reward = 0, covariate = 0, arrival = 0, family = 0, size = 0;
    int reward_len() const { return covariate - reward; }
    int covariate_len() const { return arrival - covariate; }
    int arrival_len() const { return family - arrival; }
};

FlatLayout flat_layout(const BranchingParams& b);
VectorXd to_flat(const BranchingParams& b);
/// Inverse of to_flat; throws InvalidArgument if the covariance is not PD.
BranchingParams from_flat(const BranchingParams& shape, const VectorXd& flat);

struct Recruit {
    VectorXd x;
    int y = 0;
    double u = 0.0;  // arrival offset from the recruiter
};

struct RecruiterDatum {
    VectorXd x;
    int action = 0;
    int L = 0;  // coupons issued
    std::vector<Recruit> recruits;
    bool family_observed = true;  // family size and offsets enter the likelihood
    double selection_prob = 1.0;
    int feasible_count = 1;
    int record = -1;
    int m() const { return static_cast<int>(recruits.size()); }
};

struct WeightedSample {
    std::vector<RecruiterDatum> data;
    std::vector<double> weights;
};

enum class SampleView {
    complete_epochs,  // recruiters in E_0..E_{J-1}: every block fully observed
    online            // every allocated recruiter for the covariate and reward blocks;
                      // family and offsets only once the recruiter's coupons expired
};

WeightedSample build_sample(const Trajectory& traj, double t_min, double t_max, SampleView view,
                            bool stabilizing = false);

/// W_i = sqrt((1/|psi_i|) / p_i).
std::vector<double> stabilizing_weights(const std::vector<double>& probs, const std::vector<int>& feasible_counts);

double family_logpmf(int m, double lambda, int L);
double mean_family_size(double lambda, int L);
double covariate_logpdf(const VectorXd& x_child, const VectorXd& x_parent, int action, const BranchingParams& b);
double reward_logpmf(int y, const VectorXd& z, const VectorXd& beta_y);

enum Block : unsigned { kReward = 1, kCovariate = 2, kArrival = 4, kFamily = 8, kAllBlocks = 15 };

/// Weighted log-likelihood at a flat point; fills gradient / Hessian (full length) when requested.
/// Returns -inf outside the parameter domain.
double evaluate_flat(const BranchingParams& shape, const VectorXd& flat, const WeightedSample& s, VectorXd* grad,
                     MatrixXd* hess, unsigned blocks = kAllBlocks);

double loglik(const BranchingParams& b, const WeightedSample& s, unsigned blocks = kAllBlocks);
VectorXd score(const BranchingParams& b, const WeightedSample& s, unsigned blocks = kAllBlocks);
MatrixXd hessian(const BranchingParams& b, const WeightedSample& s, unsigned blocks = kAllBlocks);

struct FitOptions {
    double ridge = 0.0;         // covariate-block ridge
    double reward_ridge = 0.0;  // L2 on beta_y
    double tol = 1e-8;
    int max_iter = 200;
    bool diagonal = false;
    unsigned blocks = kAllBlocks;
};

struct FitReport {
    int iterations = 0;
    double grad_norm = 0.0;
    double ridge = 0.0;
    double reward_ridge = 0.0;
    bool converged = true;
    std::vector<std::string> flags;
};

struct FitResult {
    BranchingParams params;
    FitReport report;
};

/// Weighted (ridge-penalized) MLE. Covariate block in closed form per group (type model)
/// or by Newton (value model); other blocks by damped Newton.
FitResult fit_wmle(const WeightedSample& s, const ActionSpaceSpec& spec, int p, double t_min, double t_max,
                   const FitOptions& opt = {});

/// B refits with iid Exp(1) multipliers per recruiter datum. Replicate b uses stream (seed, b).
std::vector<BranchingParams> generalized_bootstrap(const WeightedSample& s, const ActionSpaceSpec& spec, int p,
                                                   double t_min, double t_max, int B, std::uint64_t seed,
                                                   const FitOptions& opt = {});
std::vector<BranchingParams> generalized_bootstrap_serial(const WeightedSample& s, const ActionSpaceSpec& spec, int p,
                                                          double t_min, double t_max, int B, std::uint64_t seed,
                                                          const FitOptions& opt = {});

/// Draw a recruit's covariates from the working model.
VectorXd sample_child_covariates(const BranchingParams& b, const VectorXd& x_parent, int action, Rng& rng);

/// Forward simulation of a full study from the working model (no network).
/// Seeds have covariates Normal(seed_mu, seed_sigma); the policy allocates coupons.
Trajectory simulate_branching_study(const BranchingParams& b, const VectorXd& seed_mu, const MatrixXd& seed_sigma,
                                    int n0, AllocationPolicy& policy, double budget, std::uint64_t seed);

/// State of a study seen from the arriving participant, as needed by rollouts.
struct RolloutStart {
    VectorXd current_x;
    double budget_remaining = 0.0;
    struct Active {
        VectorXd x;
        int action = 0;
        int L = 0;
        int recruited = 0;
        double elapsed = 0.0;
    };
    std::vector<Active> active;
};

RolloutStart make_rollout_start(const std::vector<ParticipantRecord>& records, int current, double t_max,
                                double budget, double spent);

struct RolloutOptions {
    int horizon = -1;  // max synthetic participants; -1 means remaining budget / min cost
    CostModel cost;
};

/// One synthetic continuation under allocation rule alpha. Returns the expected
/// reward summed over synthetic participants admitted by the budget.
double simulate_rollout(const BranchingParams& b, const RolloutStart& start, const PolicyParams& alpha,
                        const RolloutOptions& opt, Rng& rng, int* participants = nullptr);

}  // namespace rlrds
