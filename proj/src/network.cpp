#include "rlrds/network.hpp"

#include <algorithm>
#include <cmath>

#include "rlrds/errors.hpp"
#include "rlrds/rng.hpp"

namespace rlrds {

namespace {

inline double link_prob(double dist, double rho0, double rho1) {
    return logistic(rho0 - rho1 * dist);
}

MatrixXd sqrt_factor(const MatrixXd& sigma) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal();
}

}  // namespace

std::string to_string(NeighborRule r) {
    return r == NeighborRule::uniform ? "uniform" : "distance_squared_on_a2";
}

NeighborRule parse_neighbor_rule(const std::string& s) {
    if (s == "uniform") return NeighborRule::uniform;
    if (s == "distance_squared_on_a2") return NeighborRule::distance_squared_on_a2;
    throw InvalidArgument("unknown neighbor rule: " + s);
}

void NetworkParams::validate() const {
    const int p = dim();
    if (p < 1) throw InvalidArgument("mu must be nonempty");
    if (sigma.rows() != p || sigma.cols() != p) throw InvalidArgument("sigma must be p x p");
    if (!std::isfinite(rho0) || !std::isfinite(rho1) || rho1 < 0) throw InvalidArgument("rho1 must be finite and >= 0");
    if (!mu.allFinite() || !sigma.allFinite()) throw InvalidArgument("mu and sigma must be finite");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
        throw InvalidArgument("sigma must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
        throw InvalidArgument("sigma must be positive semidefinite");
    if (!(t_min >= 0 && t_max > t_min && std::isfinite(t_max))) throw InvalidArgument("need 0 <= t_min < t_max");
    if (!(zeta > 0) || !(zeta + zeta_value_slope > 0)) throw InvalidArgument("arrival rate must be positive");
    if (seed_count < 1) throw InvalidArgument("seed_count must be >= 1");
    if (!beta_y.allFinite()) throw InvalidArgument("beta_y must be finite");
}

void NetworkParams::validate_for(const ActionSpaceSpec& spec) const {
    validate();
    spec.validate();
    if (beta_y.size() != reward_dim(spec.reward_design(), dim()))
        throw InvalidArgument("beta_y length does not match the reward design");
}

NetworkParams NetworkParams::type_setting(double rho1) {
    NetworkParams t;
    t.rho0 = 0.0;
    t.rho1 = rho1;
    t.mu = VectorXd::Ones(3);
    t.sigma = 10.0 * MatrixXd::Identity(3, 3);
    const VectorXd k = (VectorXd(3) << 1, -1, -1).finished();
    t.beta_y.resize(10);
    t.beta_y << -1, 3 * k, -3 * k, -6 * k;
    t.neighbor_rule = NeighborRule::distance_squared_on_a2;
    return t;
}

NetworkParams NetworkParams::value_setting(double rho1) {
    NetworkParams t = type_setting(rho1);
    t.beta_y.resize(8);
    t.beta_y << -4, 0, 0, 0, 0, 3, 0, 0;
    t.zeta = 0.5;
    t.zeta_value_slope = 6.0;
    t.neighbor_rule = NeighborRule::uniform;
    return t;
}

NetworkParams NetworkParams::count_setting(double rho1) {
    NetworkParams t = type_setting(rho1);
    t.beta_y.resize(4);
    t.beta_y << -1, 2, -2, -2;
    t.neighbor_rule = NeighborRule::uniform;
    return t;
}

NetworkParams NetworkParams::for_variant(ActionVariant v, double rho1) {
    switch (v) {
        case ActionVariant::type_choice: return type_setting(rho1);
        case ActionVariant::value_grid: return value_setting(rho1);
        case ActionVariant::count_grid: return count_setting(rho1);
    }
    return type_setting(rho1);
}

double edge_prob(const VectorXd& xi, const VectorXd& xj, double rho0, double rho1) {
    if (xi.size() != xj.size()) throw InvalidArgument("covariate dimension mismatch");
    if (!xi.allFinite() || !xj.allFinite() || !std::isfinite(rho0) || !std::isfinite(rho1))
        throw InvalidArgument("edge_prob: non-finite input");
    if (rho1 < 0) throw InvalidArgument("edge_prob: rho1 must be >= 0");
    return link_prob((xi - xj).norm(), rho0, rho1);
}

Population::Population(RowMatrixXd covariates, double rho0, double rho1, std::uint64_t edge_seed)
    : x_(std::move(covariates)), rho0_(rho0), rho1_(rho1), edge_seed_(edge_seed), lazy_(true) {}

Population::Population(RowMatrixXd covariates, std::vector<std::vector<int>> adjacency)
    : x_(std::move(covariates)), materialized_(true), lazy_(false), adj_(std::move(adjacency)) {
    const int n = size();
    if (static_cast<int>(adj_.size()) != n) throw InvalidArgument("adjacency size does not match covariates");
    for (int i = 0; i < n; ++i) {
        auto& row = adj_[i];
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        for (int j : row) {
            if (j < 0 || j >= n || j == i) throw InvalidArgument("adjacency index out of range or self-loop");
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j : adj_[i])
            if (!std::binary_search(adj_[j].begin(), adj_[j].end(), i))
                throw InvalidArgument("adjacency is not symmetric");
}

bool Population::has_edge(int i, int j) const {
    if (i == j) return false;
    if (!lazy_) return std::binary_search(adj_[i].begin(), adj_[i].end(), j);
    const auto lo = static_cast<std::uint64_t>(std::min(i, j));
    const auto hi = static_cast<std::uint64_t>(std::max(i, j));
    const double d = (x_.row(i) - x_.row(j)).norm();
    return hash_uniform(edge_seed_, lo, hi) < link_prob(d, rho0_, rho1_);
}

std::vector<int> Population::scan_row(int i) const {
    std::vector<int> out;
    const int n = size();
    for (int j = 0; j < n; ++j)
        if (has_edge(i, j)) out.push_back(j);
    return out;
}

std::vector<int> Population::neighbors(int i) const {
    if (materialized_) return adj_[i];
    return scan_row(i);
}

void Population::materialize() {
    if (materialized_) return;
    const int n = size();
    std::vector<std::vector<int>> adj(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < n; ++i) adj[i] = scan_row(i);
    adj_ = std::move(adj);
    materialized_ = true;
}

void Population::materialize_serial() {
    if (materialized_) return;
    const int n = size();
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i) adj[i] = scan_row(i);
    adj_ = std::move(adj);
    materialized_ = true;
}

const std::vector<std::vector<int>>& Population::adjacency() const {
    if (!materialized_) throw ContractViolation("adjacency requested before materialize()");
    return adj_;
}

std::size_t Population::edge_count() const {
    std::size_t twice = 0;
    if (materialized_) {
        for (const auto& row : adj_) twice += row.size();
    } else {
        for (int i = 0; i < size(); ++i) twice += scan_row(i).size();
    }
    return twice / 2;
}

namespace {

RowMatrixXd draw_covariates(const NetworkParams& params, int n, std::uint64_t seed, bool parallel) {
    const int p = params.dim();
    const MatrixXd f = sqrt_factor(params.sigma);
    RowMatrixXd x(n, p);
    auto row = [&](int i) {
        Rng rng(derive_seed(seed, 1, static_cast<std::uint64_t>(i)));
        VectorXd z(p);
        for (int k = 0; k < p; ++k) z(k) = rng.normal();
        x.row(i) = (params.mu + f * z).transpose();
    };
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) row(i);
    } else {
        for (int i = 0; i < n; ++i) row(i);
    }
    return x;
}

}  // namespace

Population sample_population(const NetworkParams& params, int n, std::uint64_t seed, Adjacency mode) {
    params.validate();
    if (n < 1) throw InvalidArgument("population size must be >= 1");
    Population pop(draw_covariates(params, n, seed, true), params.rho0, params.rho1, derive_seed(seed, 0));
    if (mode == Adjacency::materialized) pop.materialize();
    return pop;
}

Population sample_population_serial(const NetworkParams& params, int n, std::uint64_t seed) {
    params.validate();
    if (n < 1) throw InvalidArgument("population size must be >= 1");
    Population pop(draw_covariates(params, n, seed, false), params.rho0, params.rho1, derive_seed(seed, 0));
    pop.materialize_serial();
    return pop;
}

VectorXd neighbor_selection_probs(const VectorXd& x_recruiter, const RowMatrixXd& candidates, int action,
                                  NeighborRule rule) {
    const auto m = candidates.rows();
    if (m < 1) throw InvalidArgument("empty candidate set");
    VectorXd prob = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    if (rule == NeighborRule::distance_squared_on_a2 && action == 1) {
        VectorXd d2(m);
        for (Eigen::Index j = 0; j < m; ++j) d2(j) = (candidates.row(j).transpose() - x_recruiter).squaredNorm();
        const double total = d2.sum();
        if (total > 0) prob = d2 / total;
    }
    return prob;
}

}  // namespace rlrds
