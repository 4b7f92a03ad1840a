#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rlrds/branching.hpp"
#include "rlrds/network.hpp"
#include "rlrds/rds_sim.hpp"

namespace rlrds {

/// How every study in an inference experiment is produced: fresh population of
/// `population` nodes, random allocation with main coupons, `budget` participants.
struct SimulationDesign {
    ActionSpaceSpec spec;
    int population = 1000;
    double budget = 200;
    CostModel cost;
    bool diagonal = true;
    double ridge = 0.0;
    int k_factor = 10;  // K = k_factor * budget for the large beta-bar study
    int max_retries = 5;
};

/// Finite candidate set with cached covariate-model limits (empty optional: study died out).
struct ThetaGrid {
    std::vector<NetworkParams> thetas;
    int truth = -1;
    std::vector<std::optional<BranchingParams>> beta_bar;
    int size() const { return static_cast<int>(thetas.size()); }
};

/// Lattice around `truth`: rho1 scaled by each factor, every mu component shifted by each shift.
/// rho0 and Sigma stay at the truth. The truth (factor 1, shift 0) is marked.
ThetaGrid make_coverage_grid(const NetworkParams& truth, const std::vector<double>& rho1_factors,
                             const std::vector<double>& mu_shifts);

Trajectory simulate_design_study(const NetworkParams& theta, const SimulationDesign& d, double budget,
                                 int population, std::uint64_t seed);
inline Trajectory simulate_design_study(const NetworkParams& theta, const SimulationDesign& d, std::uint64_t seed) {
    return simulate_design_study(theta, d, d.budget, d.population, seed);
}

/// Unweighted sample of every allocated recruiter.
WeightedSample design_sample(const Trajectory& traj, const NetworkParams& theta);

/// Covariate-block MLE; throws SingularFitError.
BranchingParams fit_covariates(const WeightedSample& s, const SimulationDesign& d, const NetworkParams& theta);

/// Covariate-block MLE from one large study of K participants; reseeds with a doubled
/// population when the study dies out, then throws NumericalError.
BranchingParams approx_beta_bar(const NetworkParams& theta, const SimulationDesign& d, std::uint64_t seed);

/// Fill grid.beta_bar for every theta (stream (seed, index)); die-outs stay empty.
void fill_beta_bar(ThetaGrid& grid, const SimulationDesign& d, std::uint64_t seed);
void fill_beta_bar_serial(ThetaGrid& grid, const SimulationDesign& d, std::uint64_t seed);

/// -2[l(target) - l(hat)] for the covariate block.
double llr_stat(const WeightedSample& s, const BranchingParams& target, const BranchingParams& hat);

/// (B+1)-adjusted upper quantile: ceil((1-alpha)(B+1))-th order statistic, +inf if past B.
double finite_quantile(std::vector<double> stats, double alpha);

/// B reference statistics for one theta; study b uses stream (seed, b). Singular fits give +inf.
std::vector<double> reference_stats(const NetworkParams& theta, const BranchingParams& beta_bar,
                                    const SimulationDesign& d, int B, std::uint64_t seed);

/// Reference statistics for every theta with a beta-bar; theta i uses stream (seed, i).
std::vector<std::vector<double>> sbi_references(const ThetaGrid& grid, const SimulationDesign& d, int B,
                                                std::uint64_t seed);
std::vector<std::vector<double>> sbi_references_serial(const ThetaGrid& grid, const SimulationDesign& d, int B,
                                                       std::uint64_t seed);

enum class Method { sbi, abc, bs_llr, bs_wald };
std::string to_string(Method m);

struct ConfidenceRegion {
    Method method = Method::sbi;
    double alpha = 0.05;
    std::vector<int> accepted;
    std::vector<double> observed;   // per theta, NaN where not applicable
    std::vector<double> threshold;  // per theta
    std::vector<bool> excluded;     // no beta-bar or no references
    std::vector<std::string> warnings;
    bool contains(int index) const;
};

/// Accept theta iff its observed statistic <= the finite-B quantile of its references.
ConfidenceRegion sbi_region(const WeightedSample& obs, const BranchingParams& beta_hat, const ThetaGrid& grid,
                            const std::vector<std::vector<double>>& refs, double alpha);
ConfidenceRegion sbi_region(const WeightedSample& obs, ThetaGrid& grid, double alpha, int B, const SimulationDesign& d,
                            std::uint64_t seed);

/// Flattened (phi, vec G, diag Sigma) per group; (phi0, phi1, omega0, omega1) for the value model.
VectorXd covariate_features(const BranchingParams& b);

/// Nearest theta (Euclidean on covariate_features) for each of B bootstrap refits.
ConfidenceRegion abc_region(const WeightedSample& obs, const ThetaGrid& grid, int B, const SimulationDesign& d,
                            std::uint64_t seed);

/// Mahalanobis statistics of `points` around `center`, using the sample covariance of `draws`.
/// A singular covariance is ridge-regularized and *regularized is set.
std::vector<double> wald_stats(const std::vector<VectorXd>& draws, const VectorXd& center,
                               const std::vector<VectorXd>& points, bool* regularized = nullptr);

enum class BootstrapVariant { llr, wald };

ConfidenceRegion bootstrap_region(const WeightedSample& obs, const BranchingParams& beta_hat, const ThetaGrid& grid,
                                  double alpha, int B, BootstrapVariant variant, const SimulationDesign& d,
                                  std::uint64_t seed);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool empty = true;
    double length() const { return empty ? 0.0 : hi - lo; }
    bool contains(double v) const { return !empty && lo <= v && v <= hi; }
};

Interval project(const ConfidenceRegion& region, const ThetaGrid& grid,
                 const std::function<double(const NetworkParams&)>& f);

/// theta index, rho0, rho1, mu..., observed, threshold, accepted, excluded.
void write_region_csv(const std::string& path, const ConfidenceRegion& r, const ThetaGrid& grid);

}  // namespace rlrds
