#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rlrds/model.hpp"

namespace rlrds {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class NeighborRule { uniform, distance_squared_on_a2 };

std::string to_string(NeighborRule r);
NeighborRule parse_neighbor_rule(const std::string& s);

/// Generative specification theta of the hidden population and the study.
struct NetworkParams {
    double rho0 = 0.0;
    double rho1 = 1.0;
    VectorXd mu;
    MatrixXd sigma;
    VectorXd beta_y;
    // Arrival rate of a recruit is zeta + zeta_value_slope * (incentive value).
    double zeta = 1.0;
    double zeta_value_slope = 0.0;
    double t_min = 0.0;
    double t_max = 3.0;
    NeighborRule neighbor_rule = NeighborRule::distance_squared_on_a2;
    int seed_count = 25;

    int dim() const { return static_cast<int>(mu.size()); }
    double arrival_rate(double incentive_value) const { return zeta + zeta_value_slope * incentive_value; }
    /// Throws InvalidArgument on any violated invariant.
    void validate() const;
    void validate_for(const ActionSpaceSpec& spec) const;

    /// Coupon-type setting: mu=(1,1,1), Sigma=10 I, beta_y=(-1,3k,-3k,-6k), k=(1,-1,-1).
    static NetworkParams type_setting(double rho1);
    /// Incentive-value setting: zeta0=0.5, zeta1=6, beta_y=(-4,0,0,0,0,3,0,0).
    static NetworkParams value_setting(double rho1);
    /// Coupon-count setting: beta_y=(-1,2,-2,-2), uniform neighbor selection.
    static NetworkParams count_setting(double rho1);
    static NetworkParams for_variant(ActionVariant v, double rho1);
};

/// Latent-distance link probability 1/(1+exp(-(rho0 - rho1 |xi-xj|))).
double edge_prob(const VectorXd& xi, const VectorXd& xj, double rho0, double rho1);

/// N agents with covariates and an undirected graph. Edges are either stored
/// explicitly or evaluated on demand from a per-pair hash; both give the same graph.
class Population {
public:
    Population() = default;
    Population(RowMatrixXd covariates, double rho0, double rho1, std::uint64_t edge_seed);
    /// Population with an explicit adjacency (e.g. loaded from file).
    Population(RowMatrixXd covariates, std::vector<std::vector<int>> adjacency);

    int size() const { return static_cast<int>(x_.rows()); }
    int dim() const { return static_cast<int>(x_.cols()); }
    const RowMatrixXd& covariates() const { return x_; }
    VectorXd x(int i) const { return x_.row(i).transpose(); }
    std::uint64_t edge_seed() const { return edge_seed_; }
    double rho0() const { return rho0_; }
    double rho1() const { return rho1_; }

    bool has_edge(int i, int j) const;
    /// Sorted neighbor indices of i.
    std::vector<int> neighbors(int i) const;
    bool materialized() const { return materialized_; }
    /// Store all neighbor lists. OpenMP over rows.
    void materialize();
    void materialize_serial();
    const std::vector<std::vector<int>>& adjacency() const;
    std::size_t edge_count() const;

private:
    std::vector<int> scan_row(int i) const;

    RowMatrixXd x_;
    double rho0_ = 0.0;
    double rho1_ = 0.0;
    std::uint64_t edge_seed_ = 0;
    bool materialized_ = false;
    bool lazy_ = false;
    std::vector<std::vector<int>> adj_;
};

enum class Adjacency { lazy, materialized };

/// Covariates iid Normal(mu, sigma); each pair linked independently with edge_prob.
/// Row i depends only on (seed, i), so the result is thread-count independent.
Population sample_population(const NetworkParams& params, int n, std::uint64_t seed,
                             Adjacency mode = Adjacency::materialized);
Population sample_population_serial(const NetworkParams& params, int n, std::uint64_t seed);

/// Selection distribution over the m candidate rows.
VectorXd neighbor_selection_probs(const VectorXd& x_recruiter, const RowMatrixXd& candidates, int action,
                                  NeighborRule rule = NeighborRule::distance_squared_on_a2);

}  // namespace rlrds
